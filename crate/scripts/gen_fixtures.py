#!/usr/bin/env python3
"""Generate the synthetic OSM scenario fixtures under crates/core/fixtures/osm.

The layouts are synthetic (hand-tuned random blocks), placed at real
coordinates so the gazetteer names resolve to plausible boxes. Output is
deterministic for a given seed.
"""

import math
import random
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "crates" / "core" / "fixtures" / "osm"
R = 6_371_000.0


class Doc:
    def __init__(self, lat0, lon0, size_m):
        self.lat0, self.lon0 = lat0, lon0
        half = size_m / 2.0
        self.dlat = math.degrees(half / R)
        self.dlon = math.degrees(half / (R * math.cos(math.radians(lat0))))
        self.half = half
        self.nodes = []
        self.ways = []
        self.next_node = 1000
        self.next_way = 5000

    def node(self, x, y):
        lat = self.lat0 + math.degrees(y / R)
        lon = self.lon0 + math.degrees(x / (R * math.cos(math.radians(self.lat0))))
        nid = self.next_node
        self.next_node += 1
        self.nodes.append((nid, lat, lon))
        return nid

    def way(self, pts, tags, closed):
        ids = [self.node(x, y) for x, y in pts]
        if closed:
            ids.append(ids[0])
        wid = self.next_way
        self.next_way += 1
        self.ways.append((wid, ids, tags))

    def rect(self, x0, y0, x1, y1, tags):
        self.way([(x0, y0), (x1, y0), (x1, y1), (x0, y1)], tags, True)

    def write(self, path):
        lines = ['<?xml version="1.0" encoding="UTF-8"?>',
                 '<osm version="0.6" generator="radioplan-fixtures">',
                 '  <bounds minlat="%.7f" minlon="%.7f" maxlat="%.7f" maxlon="%.7f"/>' % (
                     self.lat0 - self.dlat, self.lon0 - self.dlon,
                     self.lat0 + self.dlat, self.lon0 + self.dlon)]
        for nid, lat, lon in self.nodes:
            lines.append('  <node id="%d" lat="%.7f" lon="%.7f" version="1"/>' % (nid, lat, lon))
        for wid, ids, tags in self.ways:
            lines.append('  <way id="%d" version="1">' % wid)
            for n in ids:
                lines.append('    <nd ref="%d"/>' % n)
            for k, v in tags:
                lines.append('    <tag k="%s" v="%s"/>' % (k, v))
            lines.append('  </way>')
        lines.append('  <relation id="90001" version="1">')
        lines.append('    <member type="way" ref="%d" role="outer"/>' % self.ways[0][0])
        lines.append('    <tag k="type" v="multipolygon"/>')
        lines.append('  </relation>')
        lines.append('</osm>')
        path.write_text("\n".join(lines) + "\n")


def height_tags(rng):
    r = rng.random()
    if r < 0.35:
        return [("height", "%d" % rng.randint(12, 45))]
    if r < 0.75:
        return [("building:levels", "%d" % rng.randint(3, 12))]
    return []


def place_buildings(doc, rng, count, blocks, size, kind, margin=4.0):
    placed = []
    tries = 0
    while len(placed) < count and tries < 20000:
        tries += 1
        bx0, by0, bx1, by1 = rng.choice(blocks)
        w = rng.uniform(*size)
        h = rng.uniform(*size)
        if bx1 - bx0 < w + 2 * margin or by1 - by0 < h + 2 * margin:
            continue
        x0 = rng.uniform(bx0 + margin, bx1 - margin - w)
        y0 = rng.uniform(by0 + margin, by1 - margin - h)
        cand = (x0, y0, x0 + w, y0 + h)
        if any(not (cand[2] + margin < p[0] or p[2] + margin < cand[0] or
                    cand[3] + margin < p[1] or p[3] + margin < cand[1]) for p in placed):
            continue
        placed.append(cand)
        doc.rect(*cand, [("building", kind)] + height_tags(rng))
    return placed


def slab_pair(doc, rng, x0, y0, x1, y1):
    """Two parallel slabs separated by an alley, filling one block."""
    w, h = x1 - x0, y1 - y0
    alley = rng.uniform(8.0, 12.0)
    if rng.random() < 0.5:
        depth = (h - alley) / 2.0
        for yy in (y0, y0 + depth + alley):
            inset = rng.uniform(0.0, 8.0)
            doc.rect(x0 + inset, yy, x1 - rng.uniform(0.0, 8.0), yy + depth - rng.uniform(0.0, 3.0),
                     [("building", "university")] + height_tags(rng))
    else:
        depth = (w - alley) / 2.0
        for xx in (x0, x0 + depth + alley):
            inset = rng.uniform(0.0, 8.0)
            doc.rect(xx, y0 + inset, xx + depth - rng.uniform(0.0, 3.0), y1 - rng.uniform(0.0, 8.0),
                     [("building", "university")] + height_tags(rng))


def urban():
    rng = random.Random(20240601)
    doc = Doc(22.5880, 113.9660, 300.0)
    half = doc.half
    streets = [-90.0, -30.0, 30.0, 90.0]
    for s in streets:
        doc.way([(-half, s), (half, s)], [("highway", "secondary"), ("name", "Block Rd %d" % int(s))], False)
        doc.way([(s, -half), (s, half)], [("highway", "residential")], False)
    edges = [-half] + streets + [half]
    green = (30.0, -30.0)
    for i in range(len(edges) - 1):
        for j in range(len(edges) - 1):
            x0, y0, x1, y1 = edges[i] + 6, edges[j] + 6, edges[i + 1] - 6, edges[j + 1] - 6
            if (edges[i], edges[j]) == green:
                doc.rect(x0, y0, x1, y1, [("landuse", "grass")])
                for kx, ky in ((x0 + 4, y0 + 4), (x1 - 14, y1 - 14)):
                    doc.rect(kx, ky, kx + 10, ky + 10, [("building", "kiosk")])
                continue
            slab_pair(doc, rng, x0, y0, x1, y1)
    return doc


def suburban():
    rng = random.Random(77)
    doc = Doc(22.5500, 113.9300, 300.0)
    half = doc.half
    doc.way([(-half, 0.0), (half, 0.0)], [("highway", "tertiary")], False)
    doc.way([(-60.0, -half), (-60.0, half)], [("highway", "residential")], False)
    doc.way([(80.0, -half), (80.0, 0.0)], [("highway", "service")], False)
    blocks = [(-half + 5, 10, -70, half - 5), (-50, 10, half - 5, half - 5),
              (-half + 5, -half + 5, -70, -10), (-50, -half + 5, 70, -10)]
    place_buildings(doc, rng, 10, blocks, (10.0, 18.0), "house")
    doc.rect(95.0, -140.0, 145.0, -60.0, [("leisure", "park")])
    return doc


def park():
    rng = random.Random(1851)
    doc = Doc(51.5073, -0.1657, 500.0)
    half = doc.half
    doc.rect(-half + 2, -half + 2, half - 2, half - 2, [("leisure", "park"), ("name", "Park")])
    doc.way([(-half, -120.0), (-20.0, 10.0), (half, 60.0)], [("highway", "footway")], False)
    doc.way([(-100.0, half), (-40.0, -half)], [("highway", "path")], False)
    doc.way([(40.0 + 30 * math.cos(t / 8 * math.tau), -60.0 + 20 * math.sin(t / 8 * math.tau)) for t in range(8)],
            [("natural", "water")], True)
    blocks = [(-140.0, 90.0, -60.0, 140.0), (90.0, -140.0, 140.0, -90.0)]
    place_buildings(doc, rng, 2, blocks, (8.0, 14.0), "kiosk")
    doc.rect(-130.0, -40.0, -80.0, 20.0, [("landuse", "forest")])
    return doc


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    urban().write(OUT / "synthetic_urban.osm")
    suburban().write(OUT / "suburban.osm")
    park().write(OUT / "open_park.osm")


if __name__ == "__main__":
    main()
