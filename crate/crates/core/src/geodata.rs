//! OpenStreetMap acquisition and parsing.
//!
//! Documents come from a pluggable [`MapTransport`] (live HTTP or a fixture
//! directory) and are cached on disk keyed by bounding box. Parsing keeps
//! nodes and ways; relations are skipped.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geom::LocalPoint;

/// Mean Earth radius used by the local projection.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Debug, Error)]
pub enum GeodataError {
    #[error("invalid bounding box: {0}")]
    InvalidBBox(String),
    #[error("transport failure: {0}")]
    Transport(#[from] TransportError),
    #[error("malformed OSM response: {0}")]
    Malformed(String),
    #[error("XML parse error at byte {position}: {message}")]
    Xml { position: u64, message: String },
    #[error("cache I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("network error: {0}")]
    Network(String),
    #[error("HTTP {status}: {message}")]
    Http { status: u16, message: String },
    #[error("bounding box too large for the map server: {0}")]
    BBoxTooLarge(String),
    #[error("no map data available for {0}")]
    NotFound(String),
}

/// WGS84 bounding box in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoBBox {
    pub min_lat: f64,
    pub min_lon: f64,
    pub max_lat: f64,
    pub max_lon: f64,
}

impl GeoBBox {
    pub fn new(min_lat: f64, min_lon: f64, max_lat: f64, max_lon: f64) -> Result<Self, GeodataError> {
        let bbox = Self { min_lat, min_lon, max_lat, max_lon };
        bbox.validate()?;
        Ok(bbox)
    }

    pub fn validate(&self) -> Result<(), GeodataError> {
        let lat_ok = |v: f64| v.is_finite() && (-90.0..=90.0).contains(&v);
        let lon_ok = |v: f64| v.is_finite() && (-180.0..=180.0).contains(&v);
        if !(lat_ok(self.min_lat) && lat_ok(self.max_lat)) {
            return Err(GeodataError::InvalidBBox(format!(
                "latitudes must lie in [-90, 90], got {} and {}",
                self.min_lat, self.max_lat
            )));
        }
        if !(lon_ok(self.min_lon) && lon_ok(self.max_lon)) {
            return Err(GeodataError::InvalidBBox(format!(
                "longitudes must lie in [-180, 180], got {} and {}",
                self.min_lon, self.max_lon
            )));
        }
        if self.min_lat >= self.max_lat {
            return Err(GeodataError::InvalidBBox(format!(
                "min_lat {} must be below max_lat {}",
                self.min_lat, self.max_lat
            )));
        }
        if self.min_lon >= self.max_lon {
            return Err(GeodataError::InvalidBBox(format!(
                "min_lon {} must be below max_lon {}",
                self.min_lon, self.max_lon
            )));
        }
        Ok(())
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.min_lat + self.max_lat) / 2.0, (self.min_lon + self.max_lon) / 2.0)
    }

    pub fn contains_bbox(&self, other: &GeoBBox) -> bool {
        self.min_lat <= other.min_lat
            && self.min_lon <= other.min_lon
            && self.max_lat >= other.max_lat
            && self.max_lon >= other.max_lon
    }

    fn area_deg2(&self) -> f64 {
        (self.max_lat - self.min_lat) * (self.max_lon - self.min_lon)
    }

    /// Stable cache key: hex SHA-256 prefix of the box rounded to 1e-7 degrees.
    pub fn cache_key(&self) -> String {
        let canonical = format!(
            "{:.7},{:.7},{:.7},{:.7}",
            self.min_lat, self.min_lon, self.max_lat, self.max_lon
        );
        let digest = Sha256::digest(canonical.as_bytes());
        hex::encode(&digest[..12])
    }

    /// Parses `min_lat,min_lon,max_lat,max_lon`.
    pub fn parse(text: &str) -> Result<Self, GeodataError> {
        let parts: Vec<f64> = text
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| GeodataError::InvalidBBox(format!("{text:?}: {e}")))?;
        match parts.as_slice() {
            &[a, b, c, d] => GeoBBox::new(a, b, c, d),
            _ => Err(GeodataError::InvalidBBox(format!(
                "expected 4 comma-separated values, got {}",
                parts.len()
            ))),
        }
    }
}

/// Equirectangular projection about a fixed origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalFrame {
    pub origin_lat: f64,
    pub origin_lon: f64,
}

impl LocalFrame {
    pub fn new(origin_lat: f64, origin_lon: f64) -> Self {
        Self { origin_lat, origin_lon }
    }

    pub fn centered_on(bbox: &GeoBBox) -> Self {
        let (lat, lon) = bbox.center();
        Self::new(lat, lon)
    }

    pub fn project(&self, lat: f64, lon: f64) -> LocalPoint {
        let x = EARTH_RADIUS_M * (lon - self.origin_lon).to_radians() * self.origin_lat.to_radians().cos();
        let y = EARTH_RADIUS_M * (lat - self.origin_lat).to_radians();
        LocalPoint::new(x, y)
    }

    /// Inverse of [`LocalFrame::project`]; returns `(lat, lon)`.
    pub fn unproject(&self, p: LocalPoint) -> (f64, f64) {
        let lat = self.origin_lat + (p.y / EARTH_RADIUS_M).to_degrees();
        let lon = self.origin_lon + (p.x / (EARTH_RADIUS_M * self.origin_lat.to_radians().cos())).to_degrees();
        (lat, lon)
    }
}

/// Projects `(lat, lon)` into the frame centred on `origin`'s centre.
pub fn project(lat: f64, lon: f64, origin: &GeoBBox) -> LocalPoint {
    LocalFrame::centered_on(origin).project(lat, lon)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OsmNode {
    pub lat: f64,
    pub lon: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tags: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OsmWay {
    pub nodes: Vec<i64>,
    pub tags: BTreeMap<String, String>,
}

impl OsmWay {
    pub fn is_closed(&self) -> bool {
        self.nodes.len() >= 4 && self.nodes.first() == self.nodes.last()
    }

    pub fn tag(&self, key: &str) -> Option<&str> {
        self.tags.get(key).map(String::as_str)
    }
}

/// Parsed OSM document: nodes and ways keyed by id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OsmData {
    pub bounds: Option<GeoBBox>,
    pub nodes: BTreeMap<i64, OsmNode>,
    pub ways: BTreeMap<i64, OsmWay>,
    /// Ways rejected because they referenced missing nodes.
    pub dropped_ways: Vec<i64>,
    pub skipped_relations: usize,
}

impl OsmData {
    /// Bounding box of the declared `<bounds>` element, or of all nodes.
    pub fn extent(&self) -> Option<GeoBBox> {
        if let Some(b) = self.bounds {
            return Some(b);
        }
        let mut it = self.nodes.values();
        let first = it.next()?;
        let mut b = GeoBBox {
            min_lat: first.lat,
            min_lon: first.lon,
            max_lat: first.lat,
            max_lon: first.lon,
        };
        for n in it {
            b.min_lat = b.min_lat.min(n.lat);
            b.min_lon = b.min_lon.min(n.lon);
            b.max_lat = b.max_lat.max(n.lat);
            b.max_lon = b.max_lon.max(n.lon);
        }
        Some(b)
    }
}

fn xml_err<R>(reader: &Reader<R>, e: impl std::fmt::Display) -> GeodataError {
    GeodataError::Xml { position: reader.buffer_position(), message: e.to_string() }
}

fn attrs<R>(reader: &Reader<R>, e: &BytesStart<'_>) -> Result<BTreeMap<String, String>, GeodataError> {
    let mut out = BTreeMap::new();
    for attr in e.attributes() {
        let attr = attr.map_err(|err| xml_err(reader, err))?;
        let key = String::from_utf8_lossy(attr.key.as_ref()).into_owned();
        let value = attr.unescape_value().map_err(|err| xml_err(reader, err))?.into_owned();
        out.insert(key, value);
    }
    Ok(out)
}

fn num<T: std::str::FromStr, R>(
    reader: &Reader<R>,
    map: &BTreeMap<String, String>,
    key: &str,
    element: &str,
) -> Result<T, GeodataError> {
    map.get(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| xml_err(reader, format!("<{element}> has missing or invalid '{key}' attribute")))
}

enum Open {
    None,
    Node(i64, OsmNode),
    Way(i64, OsmWay),
    Relation,
}

/// Parses an OSM XML v0.6 document.
///
/// Ways referencing nodes absent from the document are dropped (and listed in
/// [`OsmData::dropped_ways`]) rather than failing the parse.
pub fn parse_osm(document: &[u8]) -> Result<OsmData, GeodataError> {
    let mut reader = Reader::from_reader(document);
    reader.config_mut().trim_text(true);
    let mut buf = Vec::new();
    let mut data = OsmData::default();
    let mut saw_root = false;
    let mut open = Open::None;

    loop {
        let event = reader.read_event_into(&mut buf).map_err(|e| xml_err(&reader, e))?;
        let (elem, is_empty) = match &event {
            Event::Start(e) => (Some(e.clone()), false),
            Event::Empty(e) => (Some(e.clone()), true),
            Event::End(e) => {
                match e.name().as_ref() {
                    b"node" => {
                        if let Open::Node(id, node) = std::mem::replace(&mut open, Open::None) {
                            data.nodes.insert(id, node);
                        }
                    }
                    b"way" => {
                        if let Open::Way(id, way) = std::mem::replace(&mut open, Open::None) {
                            data.ways.insert(id, way);
                        }
                    }
                    b"relation" => open = Open::None,
                    _ => {}
                }
                (None, false)
            }
            Event::Eof => break,
            _ => (None, false),
        };
        let Some(e) = elem else {
            buf.clear();
            continue;
        };
        let name = e.name().as_ref().to_vec();
        if !saw_root {
            if name != b"osm" {
                return Err(xml_err(
                    &reader,
                    format!("expected <osm> root element, found <{}>", String::from_utf8_lossy(&name)),
                ));
            }
            saw_root = true;
            buf.clear();
            if is_empty {
                break;
            }
            continue;
        }
        let a = attrs(&reader, &e)?;
        match name.as_slice() {
            b"bounds" => {
                let bbox = GeoBBox {
                    min_lat: num(&reader, &a, "minlat", "bounds")?,
                    min_lon: num(&reader, &a, "minlon", "bounds")?,
                    max_lat: num(&reader, &a, "maxlat", "bounds")?,
                    max_lon: num(&reader, &a, "maxlon", "bounds")?,
                };
                bbox.validate()?;
                data.bounds = Some(bbox);
            }
            b"node" => {
                let id = num(&reader, &a, "id", "node")?;
                let node = OsmNode {
                    lat: num(&reader, &a, "lat", "node")?,
                    lon: num(&reader, &a, "lon", "node")?,
                    tags: BTreeMap::new(),
                };
                if is_empty {
                    data.nodes.insert(id, node);
                } else {
                    open = Open::Node(id, node);
                }
            }
            b"way" => {
                let id = num(&reader, &a, "id", "way")?;
                let way = OsmWay { nodes: Vec::new(), tags: BTreeMap::new() };
                if is_empty {
                    data.ways.insert(id, way);
                } else {
                    open = Open::Way(id, way);
                }
            }
            b"relation" => {
                data.skipped_relations += 1;
                if !is_empty {
                    open = Open::Relation;
                }
            }
            b"nd" => {
                if let Open::Way(_, way) = &mut open {
                    way.nodes.push(num(&reader, &a, "ref", "nd")?);
                }
            }
            b"tag" => {
                let (Some(k), Some(v)) = (a.get("k"), a.get("v")) else {
                    return Err(xml_err(&reader, "<tag> requires 'k' and 'v' attributes"));
                };
                match &mut open {
                    Open::Node(_, node) => {
                        node.tags.insert(k.clone(), v.clone());
                    }
                    Open::Way(_, way) => {
                        way.tags.insert(k.clone(), v.clone());
                    }
                    _ => {}
                }
            }
            _ => {}
        }
        buf.clear();
    }

    if !saw_root {
        return Err(GeodataError::Xml { position: 0, message: "document has no <osm> root element".into() });
    }

    let dangling: Vec<i64> = data
        .ways
        .iter()
        .filter(|(_, w)| w.nodes.iter().any(|n| !data.nodes.contains_key(n)))
        .map(|(id, _)| *id)
        .collect();
    for id in &dangling {
        log::warn!("dropping way {id}: references nodes missing from the document");
        data.ways.remove(id);
    }
    data.dropped_ways = dangling;
    Ok(data)
}

/// Source of raw OSM documents.
pub trait MapTransport: Send + Sync {
    fn fetch(&self, bbox: &GeoBBox) -> Result<Vec<u8>, TransportError>;
}

/// Serves documents from `.osm` files on disk.
///
/// A request is answered with the smallest fixture whose `<bounds>` contain the
/// requested box.
#[derive(Debug, Clone)]
pub struct FixtureTransport {
    fixtures: Vec<(GeoBBox, PathBuf)>,
}

impl FixtureTransport {
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self, GeodataError> {
        let mut fixtures = Vec::new();
        let mut paths: Vec<PathBuf> = fs::read_dir(dir.as_ref())?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|ext| ext == "osm"))
            .collect();
        paths.sort();
        for path in paths {
            let bytes = fs::read(&path)?;
            let data = parse_osm(&bytes)?;
            match data.extent() {
                Some(b) => fixtures.push((b, path)),
                None => log::warn!("fixture {} has no bounds or nodes; ignored", path.display()),
            }
        }
        Ok(Self { fixtures })
    }

    /// A single file served for any box.
    pub fn single(path: impl Into<PathBuf>) -> Self {
        let everything = GeoBBox { min_lat: -90.0, min_lon: -180.0, max_lat: 90.0, max_lon: 180.0 };
        Self { fixtures: vec![(everything, path.into())] }
    }

    /// Bounds of every fixture, in file order.
    pub fn areas(&self) -> impl Iterator<Item = (&GeoBBox, &Path)> {
        self.fixtures.iter().map(|(b, p)| (b, p.as_path()))
    }
}

impl MapTransport for FixtureTransport {
    fn fetch(&self, bbox: &GeoBBox) -> Result<Vec<u8>, TransportError> {
        let best = self
            .fixtures
            .iter()
            .filter(|(b, _)| b.contains_bbox(bbox))
            .min_by(|a, b| a.0.area_deg2().total_cmp(&b.0.area_deg2()));
        match best {
            Some((_, path)) => fs::read(path).map_err(|e| TransportError::Network(format!("{}: {e}", path.display()))),
            None => Err(TransportError::NotFound(format!("{bbox:?}"))),
        }
    }
}

/// Live fetcher against the OSM v0.6 `map` API.
#[cfg(feature = "net")]
#[derive(Debug, Clone)]
pub struct HttpTransport {
    pub base_url: String,
    pub timeout: std::time::Duration,
}

#[cfg(feature = "net")]
impl Default for HttpTransport {
    fn default() -> Self {
        Self {
            base_url: "https://api.openstreetmap.org/api/0.6".into(),
            timeout: std::time::Duration::from_secs(60),
        }
    }
}

#[cfg(feature = "net")]
impl MapTransport for HttpTransport {
    fn fetch(&self, bbox: &GeoBBox) -> Result<Vec<u8>, TransportError> {
        use std::io::Read;
        let url = format!(
            "{}/map?bbox={},{},{},{}",
            self.base_url.trim_end_matches('/'),
            bbox.min_lon,
            bbox.min_lat,
            bbox.max_lon,
            bbox.max_lat
        );
        let response = ureq::get(&url).timeout(self.timeout).call();
        match response {
            Ok(resp) => {
                let mut body = Vec::new();
                resp.into_reader()
                    .read_to_end(&mut body)
                    .map_err(|e| TransportError::Network(e.to_string()))?;
                Ok(body)
            }
            Err(ureq::Error::Status(status, resp)) => {
                let message = resp.into_string().unwrap_or_default();
                // The API answers 400 when the box holds too many nodes.
                if status == 400 || status == 509 {
                    Err(TransportError::BBoxTooLarge(message))
                } else {
                    Err(TransportError::Http { status, message })
                }
            }
            Err(e) => Err(TransportError::Network(e.to_string())),
        }
    }
}

/// On-disk document cache keyed by [`GeoBBox::cache_key`].
#[derive(Debug, Clone)]
pub struct OsmCache {
    dir: PathBuf,
}

impl OsmCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn path_for(&self, bbox: &GeoBBox) -> PathBuf {
        self.dir.join(format!("{}.osm", bbox.cache_key()))
    }

    pub fn get(&self, bbox: &GeoBBox) -> Option<Vec<u8>> {
        fs::read(self.path_for(bbox)).ok()
    }

    pub fn put(&self, bbox: &GeoBBox, bytes: &[u8]) -> Result<PathBuf, GeodataError> {
        let path = self.path_for(bbox);
        write_atomic(&path, bytes)?;
        Ok(path)
    }
}

/// Writes through a temporary sibling file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Result of [`fetch_osm`].
#[derive(Debug, Clone)]
pub struct FetchedOsm {
    pub bytes: Vec<u8>,
    pub path: Option<PathBuf>,
    pub from_cache: bool,
}

/// Fetches the document for `bbox`, serving it from `cache` when present.
///
/// Fresh responses are validated as OSM XML before they are cached.
pub fn fetch_osm(
    bbox: &GeoBBox,
    transport: &dyn MapTransport,
    cache: Option<&OsmCache>,
) -> Result<FetchedOsm, GeodataError> {
    bbox.validate()?;
    static FETCH_LOCK: Mutex<()> = Mutex::new(());
    let _guard = FETCH_LOCK.lock().unwrap_or_else(|e| e.into_inner());
    if let Some(cache) = cache {
        if let Some(bytes) = cache.get(bbox) {
            return Ok(FetchedOsm { bytes, path: Some(cache.path_for(bbox)), from_cache: true });
        }
    }
    let bytes = transport.fetch(bbox)?;
    parse_osm(&bytes).map_err(|e| GeodataError::Malformed(e.to_string()))?;
    let path = match cache {
        Some(cache) => Some(cache.put(bbox, &bytes)?),
        None => None,
    };
    Ok(FetchedOsm { bytes, path, from_cache: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    const SQUARE: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<osm version="0.6">
  <bounds minlat="22.5800" minlon="113.9600" maxlat="22.5810" maxlon="113.9610"/>
  <node id="1" lat="22.5802" lon="113.9602"/>
  <node id="2" lat="22.5802" lon="113.9604"/>
  <node id="3" lat="22.5804" lon="113.9604"/>
  <node id="4" lat="22.5804" lon="113.9602"><tag k="name" v="corner &amp; co"/></node>
  <way id="10">
    <nd ref="1"/><nd ref="2"/><nd ref="3"/><nd ref="4"/><nd ref="1"/>
    <tag k="building" v="yes"/>
  </way>
  <relation id="99"><member type="way" ref="10" role="outer"/><tag k="type" v="multipolygon"/></relation>
</osm>"#;

    #[test]
    fn parses_minimal_document() {
        let data = parse_osm(SQUARE.as_bytes()).unwrap();
        assert_eq!(data.nodes.len(), 4);
        assert_eq!(data.ways.len(), 1);
        let way = &data.ways[&10];
        assert!(way.is_closed());
        assert_eq!(way.tag("building"), Some("yes"));
        assert_eq!(data.nodes[&4].tags["name"], "corner & co");
        assert_eq!(data.skipped_relations, 1);
        assert!(data.bounds.is_some());
    }

    #[test]
    fn empty_document() {
        let data = parse_osm(b"<osm/>").unwrap();
        assert!(data.nodes.is_empty() && data.ways.is_empty());
        let data = parse_osm(b"<?xml version=\"1.0\"?><osm version=\"0.6\"></osm>").unwrap();
        assert!(data.nodes.is_empty() && data.ways.is_empty());
    }

    #[test]
    fn dangling_way_is_dropped() {
        let doc = r#"<osm><node id="1" lat="0" lon="0"/>
            <way id="5"><nd ref="1"/><nd ref="2"/><tag k="highway" v="path"/></way>
            <way id="6"><nd ref="1"/><nd ref="1"/></way></osm>"#;
        let data = parse_osm(doc.as_bytes()).unwrap();
        assert_eq!(data.dropped_ways, vec![5]);
        assert!(data.ways.contains_key(&6));
    }

    #[test]
    fn rejects_non_osm_root() {
        assert!(matches!(parse_osm(b"<html></html>"), Err(GeodataError::Xml { .. })));
        assert!(parse_osm(b"<osm><node id=\"1\" lat=\"x\" lon=\"0\"/></osm>").is_err());
        assert!(parse_osm(b"").is_err());
    }

    #[test]
    fn bbox_validation() {
        assert!(GeoBBox::new(1.0, 0.0, 0.5, 1.0).is_err());
        assert!(GeoBBox::new(0.0, 1.0, 1.0, 0.5).is_err());
        assert!(GeoBBox::new(-91.0, 0.0, 1.0, 1.0).is_err());
        assert!(GeoBBox::new(0.0, 0.0, 1.0, 1.0).is_ok());
        let parsed = GeoBBox::parse("22.58, 113.96, 22.59, 113.97").unwrap();
        assert_eq!(parsed.max_lon, 113.97);
        assert!(GeoBBox::parse("1,2,3").is_err());
    }

    #[test]
    fn projection_of_origin_and_one_degree() {
        let frame = LocalFrame::new(0.0, 0.0);
        assert_eq!(frame.project(0.0, 0.0), LocalPoint::new(0.0, 0.0));
        let north = frame.project(1.0, 0.0);
        // 6_371_000 * pi / 180
        assert!((north.y - 111_194.926_644_558_73).abs() < 0.01);
        assert_eq!(north.x, 0.0);
    }

    #[test]
    fn projection_is_odd_about_origin() {
        let frame = LocalFrame::new(51.507, -0.165);
        let a = frame.project(51.507 + 0.01, -0.165 - 0.02);
        let b = frame.project(51.507 - 0.01, -0.165 + 0.02);
        assert!((a.x + b.x).abs() < 1e-6 && (a.y + b.y).abs() < 1e-6);
    }

    struct Counting {
        inner: FixtureTransport,
        calls: AtomicUsize,
    }

    impl MapTransport for Counting {
        fn fetch(&self, bbox: &GeoBBox) -> Result<Vec<u8>, TransportError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.inner.fetch(bbox)
        }
    }

    #[test]
    fn fetch_serves_fixture_and_caches() {
        let dir = tempfile::tempdir().unwrap();
        let fixtures = dir.path().join("fixtures");
        fs::create_dir_all(&fixtures).unwrap();
        fs::write(fixtures.join("square.osm"), SQUARE).unwrap();
        let transport = Counting { inner: FixtureTransport::from_dir(&fixtures).unwrap(), calls: AtomicUsize::new(0) };
        let cache = OsmCache::new(dir.path().join("cache"));
        let bbox = GeoBBox::new(22.5801, 113.9601, 22.5809, 113.9609).unwrap();

        let first = fetch_osm(&bbox, &transport, Some(&cache)).unwrap();
        assert_eq!(first.bytes, SQUARE.as_bytes());
        assert!(!first.from_cache);
        for _ in 0..4 {
            let again = fetch_osm(&bbox, &transport, Some(&cache)).unwrap();
            assert!(again.from_cache);
            assert_eq!(again.bytes, first.bytes);
        }
        assert_eq!(transport.calls.load(Ordering::SeqCst), 1);
        assert!(cache.path_for(&bbox).exists());
    }

    #[test]
    fn fetch_rejects_bad_bbox_and_malformed_payload() {
        let dir = tempfile::tempdir().unwrap();
        let bad = GeoBBox { min_lat: 2.0, min_lon: 0.0, max_lat: 1.0, max_lon: 1.0 };
        let t = FixtureTransport::single(dir.path().join("none.osm"));
        assert!(matches!(fetch_osm(&bad, &t, None), Err(GeodataError::InvalidBBox(_))));

        let junk = dir.path().join("junk.osm");
        fs::write(&junk, "<html>rate limited</html>").unwrap();
        let t = FixtureTransport::single(&junk);
        let bbox = GeoBBox::new(0.0, 0.0, 0.1, 0.1).unwrap();
        let cache = OsmCache::new(dir.path().join("cache"));
        assert!(matches!(fetch_osm(&bbox, &t, Some(&cache)), Err(GeodataError::Malformed(_))));
        assert!(cache.get(&bbox).is_none());
    }

    #[test]
    fn fixture_transport_reports_uncovered_box() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("square.osm"), SQUARE).unwrap();
        let t = FixtureTransport::from_dir(dir.path()).unwrap();
        let far = GeoBBox::new(10.0, 10.0, 10.1, 10.1).unwrap();
        assert!(matches!(t.fetch(&far), Err(TransportError::NotFound(_))));
    }
}
