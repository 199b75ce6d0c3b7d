use std::fmt;

use serde::{Deserialize, Serialize};

use super::saem::SaemOptions;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MethodFamily {
    Cc,
    ConstImp,
    MeanImp,
    Pbp,
    Mice,
    Saem,
}

/// What PbP does with a test pattern that has no fitted model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PbpFallback {
    #[default]
    MeanImputeGlobal,
    Error,
}

fn default_k() -> usize {
    100
}
fn default_donors() -> usize {
    5
}
fn default_cycles() -> usize {
    10
}

/// A fully specified prediction procedure. Deserializes from either a
/// method label such as `"MICE.20.Y.IMP"` or an object with explicit fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpecRepr")]
pub struct MethodSpec {
    pub family: MethodFamily,
    #[serde(default)]
    pub const_value: Option<f64>,
    /// Number of imputations (MICE) or prediction draws (SAEM).
    #[serde(rename = "K", default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub use_mask_feature: bool,
    #[serde(default)]
    pub use_y_in_imputation: bool,
    #[serde(default)]
    pub use_mask_in_imputation: bool,
    #[serde(default = "default_donors")]
    pub pmm_donors: usize,
    #[serde(default = "default_cycles")]
    pub chain_cycles: usize,
    #[serde(default)]
    pub pbp_fallback: PbpFallback,
    #[serde(default)]
    pub saem: SaemOptions,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFields {
    family: MethodFamily,
    #[serde(default)]
    const_value: Option<f64>,
    #[serde(rename = "K", default = "default_k")]
    k: usize,
    #[serde(default)]
    use_mask_feature: bool,
    #[serde(default)]
    use_y_in_imputation: bool,
    #[serde(default)]
    use_mask_in_imputation: bool,
    #[serde(default = "default_donors")]
    pmm_donors: usize,
    #[serde(default = "default_cycles")]
    chain_cycles: usize,
    #[serde(default)]
    pbp_fallback: PbpFallback,
    #[serde(default)]
    saem: SaemOptions,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SpecRepr {
    Label(String),
    Fields(SpecFields),
}

impl TryFrom<SpecRepr> for MethodSpec {
    type Error = Error;

    fn try_from(repr: SpecRepr) -> Result<Self> {
        let spec = match repr {
            SpecRepr::Label(s) => MethodSpec::parse_label(&s)?,
            SpecRepr::Fields(f) => MethodSpec {
                family: f.family,
                const_value: f.const_value,
                k: f.k,
                use_mask_feature: f.use_mask_feature,
                use_y_in_imputation: f.use_y_in_imputation,
                use_mask_in_imputation: f.use_mask_in_imputation,
                pmm_donors: f.pmm_donors,
                chain_cycles: f.chain_cycles,
                pbp_fallback: f.pbp_fallback,
                saem: f.saem,
            },
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl MethodSpec {
    fn base(family: MethodFamily) -> Self {
        MethodSpec {
            family,
            const_value: None,
            k: default_k(),
            use_mask_feature: false,
            use_y_in_imputation: false,
            use_mask_in_imputation: false,
            pmm_donors: default_donors(),
            chain_cycles: default_cycles(),
            pbp_fallback: PbpFallback::default(),
            saem: SaemOptions::default(),
        }
    }

    pub fn complete_case() -> Self {
        Self::base(MethodFamily::Cc)
    }

    pub fn constant(c: f64, use_mask_feature: bool) -> Self {
        MethodSpec {
            const_value: Some(c),
            use_mask_feature,
            ..Self::base(MethodFamily::ConstImp)
        }
    }

    pub fn mean(use_mask_feature: bool) -> Self {
        MethodSpec {
            use_mask_feature,
            ..Self::base(MethodFamily::MeanImp)
        }
    }

    pub fn pbp() -> Self {
        Self::base(MethodFamily::Pbp)
    }

    pub fn mice(k: usize, use_y: bool, mask_in_imputation: bool, use_mask_feature: bool) -> Self {
        MethodSpec {
            k,
            use_y_in_imputation: use_y,
            use_mask_in_imputation: mask_in_imputation,
            use_mask_feature,
            ..Self::base(MethodFamily::Mice)
        }
    }

    pub fn saem() -> Self {
        Self::base(MethodFamily::Saem)
    }

    /// Imputation constant of a `ConstImp` spec (0 when unset).
    pub fn impute_value(&self) -> f64 {
        self.const_value.unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.family == MethodFamily::Cc && self.use_mask_feature {
            return Err(Error::Config("CC cannot use mask features".into()));
        }
        if let Some(c) = self.const_value {
            if !c.is_finite() {
                return Err(Error::Config(format!("imputation constant {c} is not finite")));
            }
        }
        if matches!(self.family, MethodFamily::Mice | MethodFamily::Saem) && self.k == 0 {
            return Err(Error::Config("K must be at least 1".into()));
        }
        if self.family == MethodFamily::Mice && (self.pmm_donors == 0 || self.chain_cycles == 0) {
            return Err(Error::Config("pmm_donors and chain_cycles must be positive".into()));
        }
        if self.family == MethodFamily::Saem {
            self.saem.validate()?;
        }
        Ok(())
    }

    /// Short method name as used in result tables.
    pub fn label(&self) -> String {
        let m = if self.use_mask_feature { ".M" } else { "" };
        match self.family {
            MethodFamily::Cc => "CC".into(),
            MethodFamily::Pbp => "PbP".into(),
            MethodFamily::Saem => "SAEM".into(),
            MethodFamily::MeanImp => format!("Mean.IMP{m}"),
            MethodFamily::ConstImp => format!("{}.IMP{m}", constant_label(self.impute_value())),
            MethodFamily::Mice => format!(
                "MICE.{}{}{}.IMP{m}",
                self.k,
                if self.use_y_in_imputation { ".Y" } else { "" },
                if self.use_mask_in_imputation { ".M" } else { "" },
            ),
        }
    }

    pub fn parse_label(label: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unrecognised method label '{label}'"));
        match label {
            "CC" => return Ok(Self::complete_case()),
            "PbP" | "PBP" => return Ok(Self::pbp()),
            "SAEM" => return Ok(Self::saem()),
            _ => {}
        }
        let (head, mask_feature) = if let Some(h) = label.strip_suffix(".IMP.M") {
            (h, true)
        } else if let Some(h) = label.strip_suffix(".IMP") {
            (h, false)
        } else {
            return Err(bad());
        };
        if head == "Mean" {
            return Ok(Self::mean(mask_feature));
        }
        if let Some(rest) = head.strip_prefix("MICE.") {
            let mut parts = rest.split('.');
            let k: usize = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let tags: Vec<&str> = parts.collect();
            let (use_y, use_m) = match tags.as_slice() {
                [] => (false, false),
                ["Y"] => (true, false),
                ["M"] => (false, true),
                ["Y", "M"] => (true, true),
                _ => return Err(bad()),
            };
            let spec = Self::mice(k, use_y, use_m, mask_feature);
            spec.validate()?;
            return Ok(spec);
        }
        let c = parse_constant(head).ok_or_else(bad)?;
        Ok(Self::constant(c, mask_feature))
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl std::str::FromStr for MethodSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse_label(s)
    }
}

/// Constants in labels drop the decimal point after a leading zero
/// (`05` is 0.5); anything else is written as a plain number.
fn constant_label(c: f64) -> String {
    if c > 0.0 && c < 1.0 {
        let s = format!("{c}");
        if let Some(frac) = s.strip_prefix("0.") {
            return format!("0{frac}");
        }
    }
    format!("{c}")
}

fn parse_constant(s: &str) -> Option<f64> {
    if s.len() > 1 && s.starts_with('0') && s.bytes().all(|b| b.is_ascii_digit()) {
        return format!("0.{}", &s[1..]).parse().ok();
    }
    s.parse::<f64>().ok().filter(|c| c.is_finite())
}
