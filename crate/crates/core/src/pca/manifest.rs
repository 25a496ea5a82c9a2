use std::collections::HashSet;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Buffer radii (metres) of the buffer-zone feature groups.
pub const BUFFER_RADII: [u32; 6] = [500, 800, 1000, 1600, 2000, 3200];

/// Mapping from group name to its ordered feature columns.
///
/// Serialized as a JSON object `{"group_name": ["feat1", ...]}` in
/// insertion order.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupManifest {
    groups: IndexMap<String, Vec<String>>,
}

impl GroupManifest {
    pub fn new(groups: IndexMap<String, Vec<String>>) -> Result<Self> {
        let m = Self { groups };
        m.validate()?;
        Ok(m)
    }

    pub fn from_pairs<G, F, I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (G, Vec<F>)>,
        G: Into<String>,
        F: Into<String>,
    {
        let mut groups = IndexMap::new();
        for (g, feats) in pairs {
            let g = g.into();
            if groups.contains_key(&g) {
                return Err(Error::invalid(format!("group `{g}` listed twice")));
            }
            groups.insert(g, feats.into_iter().map(Into::into).collect());
        }
        Self::new(groups)
    }

    /// Every feature belongs to exactly one group and no group is empty.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for (g, feats) in &self.groups {
            if feats.is_empty() {
                return Err(Error::invalid(format!("group `{g}` is empty")));
            }
            for f in feats {
                if !seen.insert(f.as_str()) {
                    return Err(Error::invalid(format!("feature `{f}` appears in more than one group")));
                }
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn n_features(&self) -> usize {
        self.groups.values().map(Vec::len).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.groups.iter().map(|(g, f)| (g.as_str(), f.as_slice()))
    }

    pub fn features(&self) -> impl Iterator<Item = &str> {
        self.groups.values().flatten().map(String::as_str)
    }

    pub fn group_of(&self, feature: &str) -> Option<&str> {
        self.groups
            .iter()
            .find(|(_, f)| f.iter().any(|x| x == feature))
            .map(|(g, _)| g.as_str())
    }

    /// Buffer radius encoded as the trailing `_<digits>` of the group name.
    pub fn buffer_radius(group: &str) -> Option<u32> {
        group.rsplit_once('_').and_then(|(_, r)| r.parse().ok())
    }

    /// Appends a group at the end.
    pub fn with_group(mut self, name: impl Into<String>, features: Vec<String>) -> Result<Self> {
        let name = name.into();
        if self.groups.contains_key(&name) {
            return Err(Error::invalid(format!("group `{name}` listed twice")));
        }
        self.groups.insert(name, features);
        self.validate()?;
        Ok(self)
    }

    /// Keeps only features for which `keep` holds; groups left empty are
    /// removed.
    pub fn restrict(&self, mut keep: impl FnMut(&str) -> bool) -> Self {
        let groups = self
            .groups
            .iter()
            .map(|(g, f)| (g.clone(), f.iter().filter(|x| keep(x)).cloned().collect::<Vec<_>>()))
            .filter(|(_, f)| !f.is_empty())
            .collect();
        Self { groups }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// The 51-group, 888-feature layout of the AADT feature space: basic
    /// geographic and accessibility groups, seven buffer-zone families at six
    /// radii, and a density group holding gravity and exponential potentials
    /// of employment and population at decay exponent `alpha`.
    pub fn aadt_layout(alpha: f64) -> Self {
        fn numbered(prefix: &str, n: usize) -> Vec<String> {
            if n == 1 {
                return vec![prefix.to_string()];
            }
            (1..=n).map(|i| format!("{prefix}_{i:02}")).collect()
        }
        let mut groups: IndexMap<String, Vec<String>> = IndexMap::new();
        groups.insert("group_latitude".into(), vec!["latitude".into()]);
        groups.insert("group_longitude".into(), vec!["longitude".into()]);
        groups.insert("group_Class10_code".into(), vec!["Class10_code".into()]);
        groups.insert("group_accessibility".into(), numbered("accessibility", 10));
        groups.insert(
            "group_road".into(),
            ["Road_length", "Road_class", "Road_function", "Road_primary", "Road_trunkRoad", "Road_formOfWay"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        );
        groups.insert("group_ports".into(), numbered("Port", 6));
        groups.insert("group_airports".into(), numbered("Airport", 6));
        groups.insert("group_lag".into(), vec!["AADT_lag".into()]);
        let families: [(&str, &str, usize); 7] = [
            ("BCount", "BCount", 65),
            ("junc", "junc", 1),
            ("transport", "Transport", 4),
            ("employment", "Emp", 51),
            ("population", "Popu", 10),
            ("vehicles", "Veh", 7),
            ("earnings", "Earn", 4),
        ];
        for r in BUFFER_RADII {
            for (group, prefix, n) in families {
                groups.insert(format!("group_{group}_{r}"), numbered(&format!("{prefix}_{r}"), n));
            }
        }
        let a = format!("{alpha:.1}");
        groups.insert(
            "group_density".into(),
            vec![
                format!("rhoG_a{a}_employment"),
                format!("rhoG_a{a}_population"),
                format!("rhoE_a{a}_employment"),
                format!("rhoE_a{a}_population"),
            ],
        );
        Self { groups }
    }

    /// Small manifest with `n_groups` groups of `group_size` features named
    /// `g{k}_f{j}`.
    pub fn uniform(n_groups: usize, group_size: usize) -> Self {
        let groups = (1..=n_groups)
            .map(|g| {
                (
                    format!("group_g{g}"),
                    (1..=group_size).map(|j| format!("g{g}_f{j}")).collect(),
                )
            })
            .collect();
        Self { groups }
    }
}
