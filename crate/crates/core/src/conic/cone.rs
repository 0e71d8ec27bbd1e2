use crate::error::{Error, Result};
use crate::linalg::{norm2_unchecked, Vector};

/// One block of a product cone.
///
/// `SecondOrder(d)` is `{(t, x) : ‖x‖₂ ≤ t}` with `x ∈ ℝ^{d-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeBlock {
    Zero(usize),
    NonNeg(usize),
    SecondOrder(usize),
}

impl ConeBlock {
    pub fn dim(&self) -> usize {
        match *self {
            ConeBlock::Zero(d) | ConeBlock::NonNeg(d) | ConeBlock::SecondOrder(d) => d,
        }
    }
}

/// Ordered product of cone blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConeSpec {
    blocks: Vec<ConeBlock>,
    total: usize,
}

impl ConeSpec {
    pub fn new(blocks: Vec<ConeBlock>) -> Result<Self> {
        if let Some(b) = blocks.iter().find(|b| b.dim() == 0) {
            return Err(Error::InvalidParameter(format!(
                "cone block {b:?} has zero dimension"
            )));
        }
        let total = blocks.iter().map(ConeBlock::dim).sum();
        Ok(ConeSpec { blocks, total })
    }

    pub fn blocks(&self) -> &[ConeBlock] {
        &self.blocks
    }

    pub fn total_dim(&self) -> usize {
        self.total
    }

    /// Iterates `(block, offset)` pairs.
    pub(crate) fn offsets(&self) -> impl Iterator<Item = (ConeBlock, usize)> + '_ {
        self.blocks.iter().scan(0usize, |offset, &b| {
            let start = *offset;
            *offset += b.dim();
            Some((b, start))
        })
    }

    /// Euclidean projection onto the cone, in place.
    pub(crate) fn project_in_place(&self, point: &mut [f64]) {
        for (block, start) in self.offsets() {
            let seg = &mut point[start..start + block.dim()];
            match block {
                ConeBlock::Zero(_) => seg.iter_mut().for_each(|v| *v = 0.0),
                ConeBlock::NonNeg(_) => seg.iter_mut().for_each(|v| *v = v.max(0.0)),
                ConeBlock::SecondOrder(_) => project_soc(seg),
            }
        }
    }

    /// Projection onto the dual cone (free space for zero blocks).
    pub(crate) fn project_dual_in_place(&self, point: &mut [f64]) {
        for (block, start) in self.offsets() {
            let seg = &mut point[start..start + block.dim()];
            match block {
                ConeBlock::Zero(_) => {}
                ConeBlock::NonNeg(_) => seg.iter_mut().for_each(|v| *v = v.max(0.0)),
                ConeBlock::SecondOrder(_) => project_soc(seg),
            }
        }
    }

    /// Euclidean distance from `point` to the cone.
    pub fn distance(&self, point: &[f64]) -> f64 {
        let mut p = point.to_vec();
        self.project_in_place(&mut p);
        p.iter()
            .zip(point)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

fn project_soc(seg: &mut [f64]) {
    let (head, tail) = seg
        .split_first_mut()
        .expect("second-order block has dim >= 1");
    let t = *head;
    let nx = norm2_unchecked(tail);
    if nx <= t {
        return;
    }
    if nx <= -t {
        *head = 0.0;
        tail.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let alpha = 0.5 * (nx + t);
    *head = alpha;
    let ratio = alpha / nx;
    tail.iter_mut().for_each(|v| *v *= ratio);
}

/// Blockwise Euclidean projection of `point` onto `cones`.
pub fn project_cone(point: &[f64], cones: &ConeSpec) -> Result<Vector> {
    if point.len() != cones.total_dim() {
        return Err(Error::dim(
            "project_cone",
            format!(
                "point has length {}, cone dimension {}",
                point.len(),
                cones.total_dim()
            ),
        ));
    }
    let mut p = point.to_vec();
    cones.project_in_place(&mut p);
    Vector::new(p)
}
