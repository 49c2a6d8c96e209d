use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::depfeat::DistanceMode;
use crate::error::{Error, Result};

/// Model dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub word_dim: usize,
    /// Width of an optional second per-word vector channel; 0 disables it.
    pub extra_word_dim: usize,
    pub pos_dim: usize,
    pub ner_dim: usize,
    pub position_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub attention_hidden: usize,
    pub heads: usize,
    pub distance_dim: usize,
    pub sdp_hidden: usize,
    pub type_dim: usize,
    pub wiki_dim: usize,
    /// Query/key width of dot-product attention; `None` means `hidden`.
    pub key_dim: Option<usize>,
    pub max_pos: usize,
    pub max_dist: usize,
    pub dist_mode: DistanceMode,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            word_dim: 300,
            extra_word_dim: 0,
            pos_dim: 30,
            ner_dim: 30,
            position_dim: 10,
            hidden: 200,
            layers: 2,
            attention_hidden: 100,
            heads: 1,
            distance_dim: 10,
            sdp_hidden: 200,
            type_dim: 30,
            wiki_dim: 300,
            key_dim: None,
            max_pos: 50,
            max_dist: 20,
            dist_mode: DistanceMode::Span,
        }
    }
}

impl HyperParams {
    pub fn key_dim(&self) -> usize {
        self.key_dim.unwrap_or(self.hidden)
    }

    pub fn input_dim(&self) -> usize {
        self.word_dim + self.extra_word_dim + self.pos_dim + self.ner_dim
    }

    /// Width of `l_i` for the enabled features.
    pub fn local_dim(&self, f: FeatureSet) -> usize {
        (if f.dist { 2 * self.distance_dim } else { 0 }) + usize::from(f.flag)
    }

    /// Width of `g` for the enabled features.
    pub fn global_dim(&self, f: FeatureSet) -> usize {
        (if f.sdp { self.sdp_hidden } else { 0 })
            + (if f.types { 2 * self.type_dim } else { 0 })
            + (if f.wiki { 2 * self.wiki_dim } else { 0 })
    }

    pub fn position_rows(&self) -> usize {
        2 * self.max_pos + 1
    }

    pub fn distance_rows(&self) -> usize {
        self.max_dist + 2
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("word_dim", self.word_dim),
            ("pos_dim", self.pos_dim),
            ("ner_dim", self.ner_dim),
            ("position_dim", self.position_dim),
            ("hidden", self.hidden),
            ("layers", self.layers),
            ("attention_hidden", self.attention_hidden),
            ("distance_dim", self.distance_dim),
            ("sdp_hidden", self.sdp_hidden),
            ("type_dim", self.type_dim),
            ("wiki_dim", self.wiki_dim),
            ("key_dim", self.key_dim()),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.heads != 1 {
            return Err(Error::Config(format!(
                "only single-head attention is supported, got {} heads",
                self.heads
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Additive scoring through a hidden layer.
    #[default]
    Additive,
    /// Scaled dot product of projected queries and keys.
    Dot,
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "additive" | "add" => Ok(Variant::Additive),
            "dot" => Ok(Variant::Dot),
            other => Err(Error::Unknown {
                kind: "attention variant",
                value: other.into(),
            }),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Additive => "additive",
            Variant::Dot => "dot",
        })
    }
}

/// Enabled attention features: local `dist`, `flag`; global `sdp`, `types`, `wiki`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FeatureSet {
    pub dist: bool,
    pub flag: bool,
    pub sdp: bool,
    pub types: bool,
    pub wiki: bool,
}

impl FeatureSet {
    pub const NAMES: [&'static str; 5] = ["dist", "flag", "sdp", "types", "wiki"];

    pub fn all() -> Self {
        FeatureSet {
            dist: true,
            flag: true,
            sdp: true,
            types: true,
            wiki: true,
        }
    }

    pub fn none() -> Self {
        FeatureSet::default()
    }

    pub fn has_local(&self) -> bool {
        self.dist || self.flag
    }

    pub fn has_global(&self) -> bool {
        self.sdp || self.types || self.wiki
    }

    pub fn is_subset_of(&self, other: &FeatureSet) -> bool {
        (!self.dist || other.dist)
            && (!self.flag || other.flag)
            && (!self.sdp || other.sdp)
            && (!self.types || other.types)
            && (!self.wiki || other.wiki)
    }

    fn flags(&self) -> [bool; 5] {
        [self.dist, self.flag, self.sdp, self.types, self.wiki]
    }
}

impl FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut f = FeatureSet::none();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "dist" => f.dist = true,
                "flag" => f.flag = true,
                "sdp" => f.sdp = true,
                "types" => f.types = true,
                "wiki" => f.wiki = true,
                "all" => f = FeatureSet::all(),
                "none" => {}
                other => {
                    return Err(Error::Unknown {
                        kind: "feature",
                        value: other.into(),
                    })
                }
            }
        }
        Ok(f)
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = Self::NAMES
            .iter()
            .zip(self.flags())
            .filter(|(_, on)| *on)
            .map(|(n, _)| *n)
            .collect();
        if names.is_empty() {
            f.write_str("none")
        } else {
            f.write_str(&names.join(","))
        }
    }
}
