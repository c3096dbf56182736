//! Discrete parameter grids, configurations and their normalized view.
//!
//! Settings are kept as integers in native units (millicores, mebibytes,
//! categorical codes). The unit-hypercube view used by the screening and
//! Bayesian code is always derived on demand, never stored.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpaceError {
    #[error("parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },
    #[error("duplicate parameter name `{0}`")]
    DuplicateName(String),
    #[error("search space has no parameters")]
    Empty,
    #[error("dimension mismatch: space has {expected} parameters, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("parameter `{name}`: value {value} is not on the grid")]
    OffGrid { name: String, value: i64 },
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("malformed configuration text `{0}`")]
    Malformed(String),
}

/// One tunable parameter: an integer grid `min, min+granularity, ..., max`.
///
/// `reference` holds the bounds the parameter was originally declared with.
/// Screening narrows `min`/`max` but keeps the reference so resource cost
/// stays comparable before and after reduction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterSpec {
    name: String,
    min: i64,
    max: i64,
    granularity: i64,
    suffix: String,
    reference: (i64, i64),
}

impl ParameterSpec {
    /// Declares a parameter. Requires at least two levels.
    pub fn new(
        name: impl Into<String>,
        min: i64,
        max: i64,
        granularity: i64,
        suffix: impl Into<String>,
    ) -> Result<Self, SpaceError> {
        let spec = Self::build(name.into(), min, max, granularity, suffix.into(), (min, max))?;
        if spec.level_count() < 2 {
            return Err(SpaceError::InvalidParameter {
                name: spec.name,
                reason: format!("range [{min}, {max}] has a single level; at least 2 are required"),
            });
        }
        Ok(spec)
    }

    /// Restores a parameter derived from an earlier reduction. A single
    /// level (pinned parameter) is allowed here, and `reference` must
    /// enclose the grid.
    pub fn derived(
        name: impl Into<String>,
        min: i64,
        max: i64,
        granularity: i64,
        suffix: impl Into<String>,
        reference: (i64, i64),
    ) -> Result<Self, SpaceError> {
        let spec = Self::build(name.into(), min, max, granularity, suffix.into(), reference)?;
        let (rmin, rmax) = reference;
        if rmin >= rmax || rmin > min || rmax < max {
            return Err(SpaceError::InvalidParameter {
                name: spec.name,
                reason: format!(
                    "reference range [{rmin}, {rmax}] must enclose [{min}, {max}] and span more than one value"
                ),
            });
        }
        Ok(spec)
    }

    fn build(
        name: String,
        min: i64,
        max: i64,
        granularity: i64,
        suffix: String,
        reference: (i64, i64),
    ) -> Result<Self, SpaceError> {
        let invalid = |reason: String| SpaceError::InvalidParameter { name: name.clone(), reason };
        if name.is_empty() {
            return Err(invalid("empty parameter name".into()));
        }
        if granularity <= 0 {
            return Err(invalid(format!("granularity must be positive, got {granularity}")));
        }
        if min > max {
            return Err(invalid(format!("min {min} exceeds max {max}")));
        }
        if (max - min) % granularity != 0 {
            return Err(invalid(format!("range [{min}, {max}] is not a multiple of granularity {granularity}")));
        }
        Ok(Self { name, min, max, granularity, suffix, reference })
    }

    /// Returns a copy narrowed to `[min, max]`, which must lie on this grid.
    pub fn narrowed(&self, min: i64, max: i64) -> Result<Self, SpaceError> {
        for v in [min, max] {
            if self.index_of(v).is_none() {
                return Err(SpaceError::OffGrid { name: self.name.clone(), value: v });
            }
        }
        Self::derived(self.name.clone(), min, max, self.granularity, self.suffix.clone(), self.reference)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn min(&self) -> i64 {
        self.min
    }

    pub fn max(&self) -> i64 {
        self.max
    }

    pub fn granularity(&self) -> i64 {
        self.granularity
    }

    pub fn suffix(&self) -> &str {
        &self.suffix
    }

    pub fn reference(&self) -> (i64, i64) {
        self.reference
    }

    /// True when this parameter no longer varies (reduced to one level).
    pub fn is_pinned(&self) -> bool {
        self.min == self.max
    }

    pub fn level_count(&self) -> usize {
        ((self.max - self.min) / self.granularity + 1) as usize
    }

    pub fn level(&self, index: usize) -> i64 {
        debug_assert!(index < self.level_count());
        self.min + index as i64 * self.granularity
    }

    pub fn levels(&self) -> impl Iterator<Item = i64> + '_ {
        (0..self.level_count()).map(|i| self.level(i))
    }

    pub fn index_of(&self, value: i64) -> Option<usize> {
        if value < self.min || value > self.max || (value - self.min) % self.granularity != 0 {
            None
        } else {
            Some(((value - self.min) / self.granularity) as usize)
        }
    }

    pub fn normalize(&self, value: i64) -> f64 {
        if self.is_pinned() {
            0.0
        } else {
            (value - self.min) as f64 / (self.max - self.min) as f64
        }
    }

    /// Nearest grid level for a unit-interval coordinate; exact midpoints
    /// round toward the lower level.
    pub fn snap(&self, coord: f64) -> i64 {
        let top = self.level_count() - 1;
        if top == 0 {
            return self.min;
        }
        let t = coord.clamp(0.0, 1.0) * top as f64;
        let index = (t - 0.5 - 1e-9).ceil().clamp(0.0, top as f64) as usize;
        self.level(index)
    }

    pub fn render(&self, value: i64) -> String {
        format!("{value}{}", self.suffix)
    }
}

/// A point of the grid, one integer setting per parameter in canonical order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Configuration(Vec<i64>);

impl Configuration {
    pub fn new(settings: Vec<i64>) -> Self {
        Self(settings)
    }

    pub fn settings(&self) -> &[i64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Vec<i64>> for Configuration {
    fn from(settings: Vec<i64>) -> Self {
        Self(settings)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedPoint(Vec<f64>);

impl NormalizedPoint {
    /// Panics if a coordinate falls outside `[0, 1]`.
    pub fn new(coords: Vec<f64>) -> Self {
        assert!(
            coords.iter().all(|c| (0.0..=1.0).contains(c)),
            "normalized coordinates must lie in [0, 1]: {coords:?}"
        );
        Self(coords)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchSpace {
    parameters: Vec<ParameterSpec>,
}

impl SearchSpace {
    pub fn new(parameters: Vec<ParameterSpec>) -> Result<Self, SpaceError> {
        if parameters.is_empty() {
            return Err(SpaceError::Empty);
        }
        for (i, p) in parameters.iter().enumerate() {
            if parameters[..i].iter().any(|q| q.name == p.name) {
                return Err(SpaceError::DuplicateName(p.name.clone()));
            }
        }
        Ok(Self { parameters })
    }

    pub fn parameters(&self) -> &[ParameterSpec] {
        &self.parameters
    }

    pub fn dims(&self) -> usize {
        self.parameters.len()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.parameters.iter().position(|p| p.name == name)
    }

    /// Exact number of configurations.
    pub fn size(&self) -> BigUint {
        self.parameters.iter().fold(BigUint::from(1u32), |acc, p| acc * BigUint::from(p.level_count()))
    }

    /// Number of configurations when it fits in a `u64`.
    pub fn size_u64(&self) -> Option<u64> {
        self.parameters.iter().try_fold(1u64, |acc, p| acc.checked_mul(p.level_count() as u64))
    }

    pub fn check(&self, config: &Configuration) -> Result<(), SpaceError> {
        self.check_len(config.len())?;
        for (p, &v) in self.parameters.iter().zip(config.settings()) {
            if p.index_of(v).is_none() {
                return Err(SpaceError::OffGrid { name: p.name.clone(), value: v });
            }
        }
        Ok(())
    }

    pub fn contains(&self, config: &Configuration) -> bool {
        self.check(config).is_ok()
    }

    fn check_len(&self, got: usize) -> Result<(), SpaceError> {
        if got != self.dims() {
            Err(SpaceError::DimensionMismatch { expected: self.dims(), got })
        } else {
            Ok(())
        }
    }

    pub fn to_normalized(&self, config: &Configuration) -> Result<NormalizedPoint, SpaceError> {
        self.check_len(config.len())?;
        Ok(NormalizedPoint(self.parameters.iter().zip(config.settings()).map(|(p, &v)| p.normalize(v)).collect()))
    }

    pub fn from_normalized(&self, point: &NormalizedPoint) -> Result<Configuration, SpaceError> {
        self.check_len(point.len())?;
        Ok(Configuration(self.parameters.iter().zip(point.coords()).map(|(p, &c)| p.snap(c)).collect()))
    }

    /// Level index per dimension.
    pub fn level_indices(&self, config: &Configuration) -> Result<Vec<usize>, SpaceError> {
        self.check_len(config.len())?;
        self.parameters
            .iter()
            .zip(config.settings())
            .map(|(p, &v)| p.index_of(v).ok_or_else(|| SpaceError::OffGrid { name: p.name.clone(), value: v }))
            .collect()
    }

    pub fn from_level_indices(&self, indices: &[usize]) -> Configuration {
        Configuration(self.parameters.iter().zip(indices).map(|(p, &i)| p.level(i)).collect())
    }

    /// Position of `config` in odometer order (last parameter fastest).
    pub fn ordinal(&self, config: &Configuration) -> Result<u64, SpaceError> {
        let indices = self.level_indices(config)?;
        Ok(self.parameters.iter().zip(indices).fold(0u64, |acc, (p, i)| acc * p.level_count() as u64 + i as u64))
    }

    /// Inverse of [`SearchSpace::ordinal`].
    pub fn at_ordinal(&self, mut ordinal: u64) -> Configuration {
        let mut settings = vec![0; self.dims()];
        for (slot, p) in settings.iter_mut().zip(&self.parameters).rev() {
            let n = p.level_count() as u64;
            *slot = p.level((ordinal % n) as usize);
            ordinal /= n;
        }
        Configuration(settings)
    }

    /// Every configuration once, last parameter varying fastest.
    pub fn enumerate(&self) -> Odometer<'_> {
        Odometer::new(self, (0..self.dims()).rev().collect())
    }

    pub fn render(&self, config: &Configuration) -> BTreeMap<String, String> {
        self.parameters.iter().zip(config.settings()).map(|(p, &v)| (p.name.clone(), p.render(v))).collect()
    }

    /// Canonical text form: `name=value` pairs, comma separated, no suffixes.
    pub fn config_key(&self, config: &Configuration) -> String {
        let mut out = String::new();
        for (i, (p, v)) in self.parameters.iter().zip(config.settings()).enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(&p.name);
            out.push('=');
            out.push_str(&v.to_string());
        }
        out
    }

    pub fn parse_key(&self, text: &str) -> Result<Configuration, SpaceError> {
        let mut settings = vec![None; self.dims()];
        for pair in text.split(',') {
            let (name, value) = pair.split_once('=').ok_or_else(|| SpaceError::Malformed(text.to_string()))?;
            let pos =
                self.position(name.trim()).ok_or_else(|| SpaceError::UnknownParameter(name.trim().to_string()))?;
            let value: i64 = value.trim().parse().map_err(|_| SpaceError::Malformed(text.to_string()))?;
            settings[pos] = Some(value);
        }
        let settings: Option<Vec<i64>> = settings.into_iter().collect();
        let config = Configuration(settings.ok_or_else(|| SpaceError::Malformed(text.to_string()))?);
        self.check(&config)?;
        Ok(config)
    }
}

impl fmt::Display for SearchSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, p) in self.parameters.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{}[{}..{} step {}]", p.name, p.min, p.max, p.granularity)?;
        }
        Ok(())
    }
}

/// Mixed-radix position over a space, detached from it. `order` lists
/// dimensions from the fastest-varying to the slowest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OdometerCursor {
    order: Vec<usize>,
    indices: Vec<usize>,
    done: bool,
}

impl OdometerCursor {
    pub fn new(order: Vec<usize>) -> Self {
        let mut sorted = order.clone();
        sorted.sort_unstable();
        assert!(sorted.iter().enumerate().all(|(i, &d)| i == d), "order must be a permutation: {order:?}");
        let dims = order.len();
        Self { order, indices: vec![0; dims], done: false }
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn next_in(&mut self, space: &SearchSpace) -> Option<Configuration> {
        debug_assert_eq!(self.order.len(), space.dims());
        if self.done {
            return None;
        }
        let current = space.from_level_indices(&self.indices);
        self.done = true;
        for &dim in &self.order {
            self.indices[dim] += 1;
            if self.indices[dim] < space.parameters[dim].level_count() {
                self.done = false;
                break;
            }
            self.indices[dim] = 0;
        }
        Some(current)
    }
}

/// Iterator form of [`OdometerCursor`].
#[derive(Debug, Clone)]
pub struct Odometer<'a> {
    space: &'a SearchSpace,
    cursor: OdometerCursor,
}

impl<'a> Odometer<'a> {
    pub fn new(space: &'a SearchSpace, order: Vec<usize>) -> Self {
        Self { space, cursor: OdometerCursor::new(order) }
    }
}

impl Iterator for Odometer<'_> {
    type Item = Configuration;

    fn next(&mut self) -> Option<Configuration> {
        self.cursor.next_in(self.space)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn cpu(name: &str) -> ParameterSpec {
        ParameterSpec::new(name, 500, 1125, 125, "m").unwrap()
    }

    fn mem(name: &str) -> ParameterSpec {
        ParameterSpec::new(name, 512, 1152, 128, "Mi").unwrap()
    }

    #[test]
    fn level_counts_of_the_teastore_ranges() {
        assert_eq!(cpu("c").level_count(), 6);
        assert_eq!(mem("m").level_count(), 6);
    }

    #[test]
    fn single_level_and_bad_granularity_are_rejected() {
        assert!(ParameterSpec::new("x", 0, 0, 1, "").is_err());
        let err = ParameterSpec::new("webuiCpu", 500, 1125, 0, "m").unwrap_err();
        assert!(err.to_string().contains("webuiCpu"));
        assert!(ParameterSpec::new("x", 0, 10, 3, "").is_err());
        assert!(ParameterSpec::new("x", 5, 1, 1, "").is_err());
    }

    #[test]
    fn space_size_is_exact() {
        let params: Vec<_> = (0..14).map(|i| cpu(&format!("p{i}"))).collect();
        let space = SearchSpace::new(params).unwrap();
        assert_eq!(space.size(), BigUint::from(78_364_164_096u64));
        assert_eq!(space.size_u64(), Some(78_364_164_096));

        let one = SearchSpace::new(vec![ParameterSpec::new("b", 0, 1, 1, "").unwrap()]).unwrap();
        assert_eq!(one.size(), BigUint::from(2u32));

        let four = SearchSpace::new((0..4).map(|i| cpu(&format!("p{i}"))).collect()).unwrap();
        assert_eq!(four.size_u64(), Some(1296));
    }

    #[test]
    fn huge_spaces_do_not_overflow() {
        let params: Vec<_> = (0..40).map(|i| cpu(&format!("p{i}"))).collect();
        let space = SearchSpace::new(params).unwrap();
        assert_eq!(space.size_u64(), None);
        assert_eq!(space.size(), BigUint::from(6u32).pow(40));
    }

    #[test]
    fn duplicate_names_rejected() {
        assert_eq!(SearchSpace::new(vec![cpu("a"), cpu("a")]).unwrap_err(), SpaceError::DuplicateName("a".into()));
    }

    #[test]
    fn normalization_examples() {
        let space = SearchSpace::new(vec![cpu("c")]).unwrap();
        let n = |v| space.to_normalized(&Configuration::new(vec![v])).unwrap().coords()[0];
        assert_eq!(n(500), 0.0);
        assert_eq!(n(1125), 1.0);
        assert!((n(750) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn snapping_examples() {
        let space = SearchSpace::new(vec![cpu("c")]).unwrap();
        let snap = |x| space.from_normalized(&NormalizedPoint::new(vec![x])).unwrap().settings()[0];
        assert_eq!(snap(0.49), 750);
        assert_eq!(snap(0.0), 500);
        // 0.1 * 5 = 0.5 sits exactly between levels 0 and 1
        assert_eq!(snap(0.1), 500);
        assert_eq!(snap(0.3), 625);
        assert_eq!(snap(1.0), 1125);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let space = SearchSpace::new(vec![cpu("a"), cpu("b")]).unwrap();
        assert!(matches!(
            space.to_normalized(&Configuration::new(vec![500])),
            Err(SpaceError::DimensionMismatch { expected: 2, got: 1 })
        ));
        assert!(space.from_normalized(&NormalizedPoint::new(vec![0.5])).is_err());
    }

    #[test]
    fn odometer_order() {
        let b = |n: &str| ParameterSpec::new(n, 0, 1, 1, "").unwrap();
        let space = SearchSpace::new(vec![b("x"), b("y")]).unwrap();
        let all: Vec<Vec<i64>> = space.enumerate().map(|c| c.settings().to_vec()).collect();
        assert_eq!(all, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);

        let single = SearchSpace::new(vec![ParameterSpec::new("z", 0, 2, 1, "").unwrap()]).unwrap();
        let all: Vec<Vec<i64>> = single.enumerate().map(|c| c.settings().to_vec()).collect();
        assert_eq!(all, vec![vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn ordinal_matches_enumeration() {
        let space = SearchSpace::new(vec![cpu("a"), mem("b"), ParameterSpec::new("e", 1, 2, 1, "").unwrap()]).unwrap();
        for (i, c) in space.enumerate().enumerate() {
            assert_eq!(space.ordinal(&c).unwrap(), i as u64);
            assert_eq!(space.at_ordinal(i as u64), c);
        }
    }

    #[test]
    fn render_appends_suffix() {
        let space = SearchSpace::new(vec![
            cpu("webuiCpu"),
            mem("webuiMemory"),
            ParameterSpec::new("mySettingChoice", 1, 2, 1, "").unwrap(),
        ])
        .unwrap();
        let r = space.render(&Configuration::new(vec![750, 640, 2]));
        assert_eq!(r["webuiCpu"], "750m");
        assert_eq!(r["webuiMemory"], "640Mi");
        assert_eq!(r["mySettingChoice"], "2");
    }

    #[test]
    fn key_text_form_round_trips() {
        let space = SearchSpace::new(vec![cpu("a"), mem("b")]).unwrap();
        let c = Configuration::new(vec![625, 1024]);
        let key = space.config_key(&c);
        assert_eq!(key, "a=625,b=1024");
        assert_eq!(space.parse_key(&key).unwrap(), c);
        assert!(space.parse_key("a=626,b=1024").is_err());
        assert!(space.parse_key("a=625").is_err());
    }

    #[test]
    fn narrowing_keeps_reference_and_allows_pinning() {
        let p = cpu("a");
        let n = p.narrowed(750, 750).unwrap();
        assert!(n.is_pinned());
        assert_eq!(n.reference(), (500, 1125));
        assert_eq!(n.level_count(), 1);
        assert_eq!(n.normalize(750), 0.0);
        assert_eq!(n.snap(0.7), 750);
        assert!(p.narrowed(760, 1000).is_err());
    }

    #[test]
    fn exhaustive_round_trip_and_distinctness() {
        let space = SearchSpace::new(vec![cpu("a"), mem("b"), ParameterSpec::new("c", 0, 4, 2, "").unwrap()]).unwrap();
        let mut seen = HashSet::new();
        for c in space.enumerate() {
            let back = space.from_normalized(&space.to_normalized(&c).unwrap()).unwrap();
            assert_eq!(back, c);
            assert!(seen.insert(c));
        }
        assert_eq!(seen.len() as u64, space.size_u64().unwrap());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_param(i: usize) -> impl Strategy<Value = ParameterSpec> {
            (-50i64..50, 1i64..20, 1usize..8).prop_map(move |(min, g, steps)| {
                ParameterSpec::new(format!("p{i}"), min, min + g * steps as i64, g, "").unwrap()
            })
        }

        proptest! {
            #[test]
            fn normalized_round_trip(a in arb_param(0), b in arb_param(1), seed in any::<u64>()) {
                let space = SearchSpace::new(vec![a, b]).unwrap();
                let n = space.size_u64().unwrap();
                let c = space.at_ordinal(seed % n);
                let p = space.to_normalized(&c).unwrap();
                prop_assert_eq!(space.from_normalized(&p).unwrap(), c);
            }

            #[test]
            fn normalization_is_strictly_monotone(a in arb_param(0)) {
                let levels: Vec<i64> = a.levels().collect();
                for w in levels.windows(2) {
                    prop_assert!(a.normalize(w[0]) < a.normalize(w[1]));
                }
            }
        }
    }
}
