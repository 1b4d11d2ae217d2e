use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::egonet::PositionLabel;
use crate::error::{Error, Result};

/// Graph propagation scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Gcn,
    Gat,
    Pgcn,
    Pgat,
}

impl Arch {
    pub fn is_positional(self) -> bool {
        matches!(self, Arch::Pgcn | Arch::Pgat)
    }

    pub fn is_attention(self) -> bool {
        matches!(self, Arch::Gat | Arch::Pgat)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Readout {
    Mean,
    Wmr,
    Cr,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Matcher {
    Mlp,
    Lbm,
}

macro_rules! text_enum {
    ($ty:ident { $($variant:ident => $text:literal),* $(,)? }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($ty::$variant => $text),* })
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s.to_ascii_lowercase().as_str() {
                    $($text => Ok($ty::$variant),)*
                    _ => Err(Error::InvalidArgument(format!(
                        concat!("unknown ", stringify!($ty), " {:?}; expected one of: ", $($text, " "),*),
                        s
                    ))),
                }
            }
        }
    };
}

text_enum!(Arch { Gcn => "gcn", Gat => "gat", Pgcn => "pgcn", Pgat => "pgat" });
text_enum!(Readout { Mean => "mean", Wmr => "wmr", Cr => "cr" });
text_enum!(Matcher { Mlp => "mlp", Lbm => "lbm" });

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub arch: Arch,
    /// Attention heads per layer; ignored by the convolutional archs.
    pub heads: Vec<usize>,
    /// Output size per layer (per head for attention archs).
    pub hidden: Vec<usize>,
    pub position_dim: usize,
    pub readout: Readout,
    pub matcher: Matcher,
    /// Hidden width of the MLP matcher.
    pub matcher_hidden: usize,
    pub dropout: f64,
    pub leaky_slope: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            arch: Arch::Pgat,
            heads: vec![4, 1],
            hidden: vec![250, 500],
            position_dim: 50,
            readout: Readout::Wmr,
            matcher: Matcher::Lbm,
            matcher_hidden: 250,
            dropout: 0.1,
            leaky_slope: 0.2,
        }
    }
}

impl ModelConfig {
    pub fn layers(&self) -> usize {
        self.hidden.len()
    }

    /// Heads actually used by layer `k` (1 for convolutional archs).
    pub fn heads_at(&self, k: usize) -> usize {
        if self.arch.is_attention() {
            self.heads[k]
        } else {
            1
        }
    }

    /// Width of the node embeddings produced by layer `k`.
    pub fn layer_output(&self, k: usize) -> usize {
        self.heads_at(k) * self.hidden[k]
    }

    /// Width of the input to layer `k`, before position enhancement.
    pub fn layer_input(&self, k: usize, input_dim: usize) -> usize {
        if k == 0 {
            input_dim
        } else {
            self.layer_output(k - 1)
        }
    }

    pub fn node_dim(&self) -> usize {
        self.layer_output(self.layers() - 1)
    }

    /// Dimension of an anchor representation.
    pub fn anchor_dim(&self) -> usize {
        match self.readout {
            Readout::Cr => PositionLabel::COUNT * self.node_dim(),
            Readout::Mean | Readout::Wmr => self.node_dim(),
        }
    }

    /// Sets the architecture, zeroing `position_dim` for archs without
    /// position embeddings and restoring a default width otherwise.
    pub fn with_arch(mut self, arch: Arch) -> Self {
        self.arch = arch;
        if !arch.is_positional() {
            self.position_dim = 0;
        } else if self.position_dim == 0 {
            self.position_dim = ModelConfig::default().position_dim;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        let k = self.layers();
        if k == 0 {
            return bad("model needs at least one layer".into());
        }
        if self.heads.len() != k {
            return bad(format!("heads lists {} layers but hidden lists {k}", self.heads.len()));
        }
        if self.hidden.contains(&0) || self.heads.contains(&0) {
            return bad("layer sizes and head counts must be positive".into());
        }
        if self.arch.is_positional() != (self.position_dim > 0) {
            return bad(format!(
                "position_dim must be positive exactly for position-enhanced archs (arch {}, position_dim {})",
                self.arch, self.position_dim
            ));
        }
        if self.matcher == Matcher::Mlp && self.matcher_hidden == 0 {
            return bad("matcher_hidden must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} not in [0, 1)", self.dropout));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return bad(format!("leaky_slope {} not in (0, 1)", self.leaky_slope));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = ModelConfig::default();
        c.validate().unwrap();
        assert_eq!(c.layer_output(0), 1000);
        assert_eq!(c.node_dim(), 500);
        assert_eq!(c.anchor_dim(), 500);
        let cr = ModelConfig {
            readout: Readout::Cr,
            ..c
        };
        assert_eq!(cr.anchor_dim(), 1500);
    }

    #[test]
    fn position_dim_tracks_arch() {
        let gat = ModelConfig::default().with_arch(Arch::Gat);
        assert_eq!(gat.position_dim, 0);
        gat.validate().unwrap();
        assert!(ModelConfig {
            position_dim: 0,
            ..ModelConfig::default()
        }
        .validate()
        .is_err());
        let gcn = ModelConfig::default().with_arch(Arch::Gcn);
        assert_eq!(gcn.layer_output(0), 250);
    }

    #[test]
    fn enum_text_round_trip() {
        for a in [Arch::Gcn, Arch::Gat, Arch::Pgcn, Arch::Pgat] {
            assert_eq!(a.to_string().parse::<Arch>().unwrap(), a);
        }
        assert_eq!("WMR".parse::<Readout>().unwrap(), Readout::Wmr);
        assert!("sum".parse::<Readout>().is_err());
    }
}
