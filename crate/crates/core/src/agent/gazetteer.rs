use serde::{Deserialize, Serialize};

use crate::geodata::GeoBBox;

/// Named areas resolvable by `import_osm`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gazetteer {
    pub entries: Vec<GazetteerEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GazetteerEntry {
    pub name: String,
    #[serde(default)]
    pub aliases: Vec<String>,
    pub bbox: GeoBBox,
}

impl Gazetteer {
    /// Areas matching the bundled scenario fixtures.
    pub fn standard() -> Self {
        let entry = |name: &str, aliases: &[&str], b: [f64; 4]| GazetteerEntry {
            name: name.into(),
            aliases: aliases.iter().map(|s| s.to_string()).collect(),
            bbox: GeoBBox { min_lat: b[0], min_lon: b[1], max_lat: b[2], max_lon: b[3] },
        };
        Self {
            entries: vec![
                entry("HITSZ", &["Harbin Institute of Technology, Shenzhen", "synthetic urban"], [22.586651, 113.9645389, 22.589349, 113.9674611]),
                entry("Hyde Park", &["open park"], [51.5050517, -0.1693122, 51.5095483, -0.1620878]),
                entry("Suburban", &["sparse suburban"], [22.548651, 113.9285393, 22.551349, 113.9314607]),
            ],
        }
    }

    /// Case-insensitive lookup by name or alias.
    pub fn lookup(&self, name: &str) -> Option<&GazetteerEntry> {
        let key = name.trim().to_lowercase();
        self.entries
            .iter()
            .find(|e| e.name.to_lowercase() == key || e.aliases.iter().any(|a| a.to_lowercase() == key))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup_ignores_case() {
        let g = Gazetteer::standard();
        assert_eq!(g.lookup("hyde park").unwrap().name, "Hyde Park");
        assert_eq!(g.lookup(" hitsz ").unwrap().name, "HITSZ");
        assert!(g.lookup("Atlantis").is_none());
        for e in &g.entries {
            e.bbox.validate().unwrap();
        }
    }
}
