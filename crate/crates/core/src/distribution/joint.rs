// SPDX-License-Identifier: MIT OR Apache-2.0

//! Finite joint distributions over integer-labelled axes and plug-in mutual information.

use std::collections::BTreeMap;

/// A joint probability table over `N` discrete axes. Cells need not sum to one;
/// every functional normalizes by the total mass.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDist<const N: usize> {
    axes: [&'static str; N],
    cells: BTreeMap<[usize; N], f64>,
}

impl<const N: usize> JointDist<N> {
    pub fn new(axes: [&'static str; N]) -> Self {
        Self {
            axes,
            cells: BTreeMap::new(),
        }
    }

    /// Adds `p` to a cell. Non-positive masses are ignored.
    pub fn add(&mut self, key: [usize; N], p: f64) {
        if p > 0.0 {
            *self.cells.entry(key).or_insert(0.0) += p;
        }
    }

    pub fn axes(&self) -> &[&'static str; N] {
        &self.axes
    }

    pub fn cells(&self) -> impl Iterator<Item = (&[usize; N], f64)> {
        self.cells.iter().map(|(k, &p)| (k, p))
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.cells.values().sum()
    }

    /// Marginal over a single axis.
    pub fn marginal(&self, axis: usize) -> BTreeMap<usize, f64> {
        let mut m = BTreeMap::new();
        for (k, &p) in &self.cells {
            *m.entry(k[axis]).or_insert(0.0) += p;
        }
        m
    }
}

impl JointDist<3> {
    /// The two-axis marginal over `(axes[i], axes[j])`.
    pub fn pair(&self, i: usize, j: usize) -> JointDist<2> {
        let mut out = JointDist::new([self.axes[i], self.axes[j]]);
        for (k, &p) in &self.cells {
            out.add([k[i], k[j]], p);
        }
        out
    }
}

/// Plug-in mutual information `I(A; B)` in bits.
pub fn mutual_information(joint: &JointDist<2>) -> f64 {
    let z = joint.total();
    if z <= 0.0 {
        return 0.0;
    }
    let pa = joint.marginal(0);
    let pb = joint.marginal(1);
    let mut mi = 0.0;
    for (k, p) in joint.cells() {
        mi += p / z * (p * z / (pa[&k[0]] * pb[&k[1]])).log2();
    }
    mi.max(0.0)
}

/// Plug-in conditional mutual information `I(A; B | C)` in bits, where `C` is the
/// third axis.
pub fn conditional_mi(joint: &JointDist<3>) -> f64 {
    let z = joint.total();
    if z <= 0.0 {
        return 0.0;
    }
    let mut pac: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut pbc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let pc = joint.marginal(2);
    for (k, p) in joint.cells() {
        *pac.entry((k[0], k[2])).or_insert(0.0) += p;
        *pbc.entry((k[1], k[2])).or_insert(0.0) += p;
    }
    let mut mi = 0.0;
    for (k, p) in joint.cells() {
        let ratio = p * pc[&k[2]] / (pac[&(k[0], k[2])] * pbc[&(k[1], k[2])]);
        mi += p / z * ratio.log2();
    }
    mi.max(0.0)
}

/// Shannon entropy in bits of a (possibly unnormalized) distribution.
pub fn entropy(masses: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = masses.into_iter().filter(|&p| p > 0.0).collect();
    let z: f64 = v.iter().sum();
    if z <= 0.0 {
        return 0.0;
    }
    v.iter().map(|p| -(p / z) * (p / z).log2()).sum::<f64>().max(0.0)
}
