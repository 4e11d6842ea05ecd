//! Flat parameter vectors for surrogate instances.
//!
//! A [`PackLayout`] names which parts of an instance are learnable. Quadratic
//! coefficients are never stored directly: the layout holds a factor `M` and
//! the materialized coefficient is `MᵀM + δI`. Matrix blocks are row-major.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{sym_eigen, Mat, Vector};
use crate::qcqp::{factor_grad, psd_from_factor, QcqpInstance, QuadConstraint, Theta, UncertaintySet};

/// A learnable part of a QCQP instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Field {
    ObjectiveFactor,
    ObjectiveLinear,
    ObjectiveConstant,
    ConstraintFactor(usize),
    ConstraintLinear(usize),
    ConstraintConstant(usize),
}

/// Location of one field inside the flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub field: Field,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Block {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> core::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Index map between a flat vector and the learnable fields of an instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackLayout {
    n_vars: usize,
    n_constraints: usize,
    blocks: Vec<Block>,
    len: usize,
}

impl PackLayout {
    /// Builds a layout from `(field, factor_rows)` pairs; `factor_rows` is
    /// ignored for non-factor fields. Fields appear in the given order.
    pub fn new(n_vars: usize, n_constraints: usize, fields: &[(Field, usize)]) -> Result<Self> {
        let mut blocks = Vec::with_capacity(fields.len());
        let mut offset = 0;
        for &(field, k) in fields {
            if blocks.iter().any(|b: &Block| b.field == field) {
                return Err(Error::InvalidConfig(alloc::format!("field {field:?} listed twice")));
            }
            let (rows, cols) = match field {
                Field::ObjectiveFactor => (k, n_vars),
                Field::ObjectiveLinear => (n_vars, 1),
                Field::ObjectiveConstant => (1, 1),
                Field::ConstraintFactor(i) | Field::ConstraintLinear(i) | Field::ConstraintConstant(i) if i >= n_constraints => {
                    return Err(Error::IndexOutOfRange { index: i, len: n_constraints });
                }
                Field::ConstraintFactor(_) => (k, n_vars),
                Field::ConstraintLinear(_) => (n_vars, 1),
                Field::ConstraintConstant(_) => (1, 1),
            };
            if rows == 0 {
                return Err(Error::InvalidConfig(alloc::format!("factor for {field:?} has zero rows")));
            }
            blocks.push(Block { field, offset, rows, cols });
            offset += rows * cols;
        }
        Ok(Self { n_vars, n_constraints, blocks, len: offset })
    }

    /// Every field learnable, square factors.
    pub fn full(n_vars: usize, n_constraints: usize) -> Self {
        let mut fields = vec![(Field::ObjectiveFactor, n_vars), (Field::ObjectiveLinear, 0), (Field::ObjectiveConstant, 0)];
        for i in 0..n_constraints {
            fields.push((Field::ConstraintFactor(i), n_vars));
            fields.push((Field::ConstraintLinear(i), 0));
            fields.push((Field::ConstraintConstant(i), 0));
        }
        Self::new(n_vars, n_constraints, &fields).expect("full layout is well formed")
    }

    /// Linear objective plus every constraint field; the objective quadratic
    /// stays at its template value.
    pub fn linear_objective(n_vars: usize, n_constraints: usize) -> Self {
        let mut fields = vec![(Field::ObjectiveLinear, 0)];
        for i in 0..n_constraints {
            fields.push((Field::ConstraintFactor(i), n_vars));
            fields.push((Field::ConstraintLinear(i), 0));
            fields.push((Field::ConstraintConstant(i), 0));
        }
        Self::new(n_vars, n_constraints, &fields).expect("layout is well formed")
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn n_constraints(&self) -> usize {
        self.n_constraints
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, field: Field) -> Option<&Block> {
        self.blocks.iter().find(|b| b.field == field)
    }

    /// Which block owns coordinate `idx`.
    pub fn owner(&self, idx: usize) -> Option<&Block> {
        self.blocks.iter().find(|b| b.range().contains(&idx))
    }
}

/// Structured view of a [`ParamPack`]; `None` marks fields the layout does
/// not learn.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SurrogateParts {
    pub objective_factor: Option<Mat>,
    pub c: Option<Vector>,
    pub q: Option<f64>,
    pub constraints: Vec<ConstraintParts>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConstraintParts {
    pub factor: Option<Mat>,
    pub b: Option<Vector>,
    pub gamma: Option<f64>,
}

/// Flat vector of learnable parameters plus its layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamPack {
    layout: Arc<PackLayout>,
    values: Vec<f64>,
}

/// Gradient of a scalar with respect to every coefficient of an instance.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceGrad {
    pub q_mat: Mat,
    pub c: Vector,
    pub q: f64,
    pub constraints: Vec<Theta>,
}

impl InstanceGrad {
    pub fn zeros(n: usize, m: usize) -> Self {
        Self { q_mat: Mat::zeros(n, n), c: Vector::zeros(n), q: 0.0, constraints: (0..m).map(|_| Theta::zeros(n)).collect() }
    }

    /// Flattened as `Q, c, q, (A_i, b_i, γ_i)…` in row-major order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        push_row_major(&mut out, &self.q_mat);
        out.extend(self.c.iter());
        out.push(self.q);
        for t in &self.constraints {
            push_row_major(&mut out, &t.a);
            out.extend(t.b.iter());
            out.push(t.gamma);
        }
        out
    }
}

impl InstanceGrad {
    /// Sum of entrywise products with another instance-shaped array.
    pub fn dot(&self, other: &InstanceGrad) -> f64 {
        let mut s = self.q_mat.component_mul(&other.q_mat).sum() + self.c.dot(&other.c) + self.q * other.q;
        for (a, b) in self.constraints.iter().zip(&other.constraints) {
            s += a.a.component_mul(&b.a).sum() + a.b.dot(&b.b) + a.gamma * b.gamma;
        }
        s
    }

    /// `inst + h·self`, treating `self` as a direction in coefficient space.
    /// Uncertainty sets are dropped from the result.
    pub fn apply_to(&self, inst: &QcqpInstance, h: f64) -> Result<QcqpInstance> {
        let cons = inst
            .constraints()
            .iter()
            .zip(&self.constraints)
            .map(|(con, d)| QuadConstraint::new(&con.a + &d.a * h, &con.b + &d.b * h, con.gamma + h * d.gamma))
            .collect();
        QcqpInstance::new(inst.objective_matrix() + &self.q_mat * h, inst.c() + &self.c * h, inst.q() + h * self.q, cons)
    }
}

fn push_row_major(out: &mut Vec<f64>, m: &Mat) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
}

fn read_row_major(values: &[f64], rows: usize, cols: usize) -> Mat {
    Mat::from_row_slice(rows, cols, values)
}

/// Symmetric square root of a PSD matrix, used as a factor with `k = n`.
pub fn sqrt_factor(a: &Mat) -> Result<Mat> {
    let (vals, vecs) = sym_eigen(a)?;
    let d = Mat::from_diagonal(&vals.map(|v| num_traits::Float::sqrt(v.max(0.0))));
    Ok(&vecs * d * vecs.transpose())
}

impl ParamPack {
    pub fn zeros(layout: Arc<PackLayout>) -> Self {
        let values = vec![0.0; layout.len()];
        Self { layout, values }
    }

    pub fn from_values(layout: Arc<PackLayout>, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::DimensionMismatch { what: "parameter pack", expected: layout.len(), got: values.len() });
        }
        Ok(Self { layout, values })
    }

    pub fn layout(&self) -> &Arc<PackLayout> {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn block_values(&self, field: Field) -> Option<&[f64]> {
        self.layout.block(field).map(|b| &self.values[b.range()])
    }

    pub fn factor(&self, field: Field) -> Option<Mat> {
        self.layout.block(field).map(|b| read_row_major(&self.values[b.range()], b.rows, b.cols))
    }

    /// Packs structured parts; every field of the layout must be present with
    /// matching shape, fields outside the layout must be `None`.
    pub fn from_parts(layout: Arc<PackLayout>, parts: &SurrogateParts) -> Result<Self> {
        if parts.constraints.len() != layout.n_constraints() {
            return Err(Error::DimensionMismatch { what: "constraint parts", expected: layout.n_constraints(), got: parts.constraints.len() });
        }
        let mut values = vec![0.0; layout.len()];
        let mut written = 0;
        for block in layout.blocks() {
            let dst = &mut values[block.range()];
            match block.field {
                Field::ObjectiveFactor => write_mat(dst, parts.objective_factor.as_ref(), block)?,
                Field::ObjectiveLinear => write_vec(dst, parts.c.as_ref(), block)?,
                Field::ObjectiveConstant => dst[0] = parts.q.ok_or(missing(block))?,
                Field::ConstraintFactor(i) => write_mat(dst, parts.constraints[i].factor.as_ref(), block)?,
                Field::ConstraintLinear(i) => write_vec(dst, parts.constraints[i].b.as_ref(), block)?,
                Field::ConstraintConstant(i) => dst[0] = parts.constraints[i].gamma.ok_or(missing(block))?,
            }
            written += 1;
        }
        if written != parts_count(parts) {
            return Err(Error::InvalidConfig("parts contain fields outside the layout".into()));
        }
        Ok(Self { layout, values })
    }

    pub fn to_parts(&self) -> SurrogateParts {
        let mut parts = SurrogateParts {
            constraints: vec![ConstraintParts::default(); self.layout.n_constraints()],
            ..Default::default()
        };
        for block in self.layout.blocks() {
            let src = &self.values[block.range()];
            match block.field {
                Field::ObjectiveFactor => parts.objective_factor = Some(read_row_major(src, block.rows, block.cols)),
                Field::ObjectiveLinear => parts.c = Some(Vector::from_column_slice(src)),
                Field::ObjectiveConstant => parts.q = Some(src[0]),
                Field::ConstraintFactor(i) => parts.constraints[i].factor = Some(read_row_major(src, block.rows, block.cols)),
                Field::ConstraintLinear(i) => parts.constraints[i].b = Some(Vector::from_column_slice(src)),
                Field::ConstraintConstant(i) => parts.constraints[i].gamma = Some(src[0]),
            }
        }
        parts
    }

    /// Reads the learnable fields off an instance. Factors are taken from a
    /// matching-shape `P₀` when the constraint carries a factor ellipsoid,
    /// otherwise from the symmetric square root.
    pub fn from_instance(layout: Arc<PackLayout>, inst: &QcqpInstance) -> Result<Self> {
        if layout.n_vars() != inst.n_vars() || layout.n_constraints() != inst.n_constraints() {
            return Err(Error::DimensionMismatch { what: "layout vs instance", expected: layout.n_constraints(), got: inst.n_constraints() });
        }
        let mut values = vec![0.0; layout.len()];
        for block in layout.blocks() {
            let dst = &mut values[block.range()];
            match block.field {
                Field::ObjectiveFactor => {
                    let f = pad_factor(sqrt_factor(inst.objective_matrix())?, block.rows);
                    write_mat(dst, Some(&f), block)?;
                }
                Field::ObjectiveLinear => dst.copy_from_slice(inst.c().as_slice()),
                Field::ObjectiveConstant => dst[0] = inst.q(),
                Field::ConstraintFactor(i) => {
                    let con = &inst.constraints()[i];
                    let f = match &con.uncertainty {
                        UncertaintySet::PEllipsoid(set) if set.rows() == block.rows => set.p0.clone(),
                        _ => pad_factor(sqrt_factor(&con.a)?, block.rows),
                    };
                    write_mat(dst, Some(&f), block)?;
                }
                Field::ConstraintLinear(i) => dst.copy_from_slice(inst.constraints()[i].b.as_slice()),
                Field::ConstraintConstant(i) => dst[0] = inst.constraints()[i].gamma,
            }
        }
        Ok(Self { layout, values })
    }

    /// Builds the deterministic instance: learnable fields from the pack
    /// (quadratics as `MᵀM + jitter·I`), everything else from `template`.
    /// Uncertainty sets are dropped.
    pub fn materialize(&self, template: &QcqpInstance, jitter: f64) -> Result<QcqpInstance> {
        if self.layout.n_vars() != template.n_vars() || self.layout.n_constraints() != template.n_constraints() {
            return Err(Error::DimensionMismatch { what: "layout vs template", expected: self.layout.n_constraints(), got: template.n_constraints() });
        }
        let n = template.n_vars();
        let shift = Mat::identity(n, n) * jitter;
        let mut q_mat = template.objective_matrix().clone();
        let mut c = template.c().clone();
        let mut q = template.q();
        let mut cons: Vec<QuadConstraint> = template
            .constraints()
            .iter()
            .map(|con| QuadConstraint::new(con.a.clone(), con.b.clone(), con.gamma))
            .collect();
        for block in self.layout.blocks() {
            let src = &self.values[block.range()];
            match block.field {
                Field::ObjectiveFactor => q_mat = psd_from_factor(&read_row_major(src, block.rows, block.cols)) + &shift,
                Field::ObjectiveLinear => c = Vector::from_column_slice(src),
                Field::ObjectiveConstant => q = src[0],
                Field::ConstraintFactor(i) => cons[i].a = psd_from_factor(&read_row_major(src, block.rows, block.cols)) + &shift,
                Field::ConstraintLinear(i) => cons[i].b = Vector::from_column_slice(src),
                Field::ConstraintConstant(i) => cons[i].gamma = src[0],
            }
        }
        QcqpInstance::new(q_mat, c, q, cons)
    }

    /// Chain rule from instance coefficients to pack coordinates.
    pub fn pull_back(&self, grad: &InstanceGrad) -> Result<Vec<f64>> {
        if grad.constraints.len() != self.layout.n_constraints() {
            return Err(Error::DimensionMismatch { what: "instance gradient", expected: self.layout.n_constraints(), got: grad.constraints.len() });
        }
        let mut out = vec![0.0; self.layout.len()];
        for block in self.layout.blocks() {
            let src = &self.values[block.range()];
            let dst = &mut out[block.range()];
            match block.field {
                Field::ObjectiveFactor => {
                    let g = factor_grad(&read_row_major(src, block.rows, block.cols), &grad.q_mat);
                    write_mat(dst, Some(&g), block)?;
                }
                Field::ObjectiveLinear => dst.copy_from_slice(grad.c.as_slice()),
                Field::ObjectiveConstant => dst[0] = grad.q,
                Field::ConstraintFactor(i) => {
                    let g = factor_grad(&read_row_major(src, block.rows, block.cols), &grad.constraints[i].a);
                    write_mat(dst, Some(&g), block)?;
                }
                Field::ConstraintLinear(i) => dst.copy_from_slice(grad.constraints[i].b.as_slice()),
                Field::ConstraintConstant(i) => dst[0] = grad.constraints[i].gamma,
            }
        }
        Ok(out)
    }
}

fn pad_factor(f: Mat, rows: usize) -> Mat {
    if f.nrows() == rows {
        return f;
    }
    // keep the leading rows of the square root, zero-pad if more are requested
    let n = f.ncols();
    Mat::from_fn(rows, n, |i, j| if i < f.nrows() { f[(i, j)] } else { 0.0 })
}

fn missing(block: &Block) -> Error {
    Error::InvalidConfig(alloc::format!("missing value for {:?}", block.field))
}

fn write_mat(dst: &mut [f64], m: Option<&Mat>, block: &Block) -> Result<()> {
    let m = m.ok_or(missing(block))?;
    if m.nrows() != block.rows || m.ncols() != block.cols {
        return Err(Error::DimensionMismatch { what: "factor block", expected: block.len(), got: m.len() });
    }
    for i in 0..block.rows {
        for j in 0..block.cols {
            dst[i * block.cols + j] = m[(i, j)];
        }
    }
    Ok(())
}

fn write_vec(dst: &mut [f64], v: Option<&Vector>, block: &Block) -> Result<()> {
    let v = v.ok_or(missing(block))?;
    if v.len() != dst.len() {
        return Err(Error::DimensionMismatch { what: "vector block", expected: dst.len(), got: v.len() });
    }
    dst.copy_from_slice(v.as_slice());
    Ok(())
}

fn parts_count(parts: &SurrogateParts) -> usize {
    let mut n = parts.objective_factor.is_some() as usize + parts.c.is_some() as usize + parts.q.is_some() as usize;
    for c in &parts.constraints {
        n += c.factor.is_some() as usize + c.b.is_some() as usize + c.gamma.is_some() as usize;
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn instance(n: usize) -> QcqpInstance {
        let a = Mat::identity(n, n) * 2.0;
        QcqpInstance::new(
            Mat::identity(n, n),
            Vector::from_element(n, 0.5),
            1.0,
            vec![QuadConstraint::new(a, Vector::from_element(n, 0.1), -1.0), QuadConstraint::linear(Vector::from_element(n, 1.0), -1.0)],
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_bitwise() {
        let layout = Arc::new(PackLayout::full(3, 2));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let values: Vec<f64> = (0..layout.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let pack = ParamPack::from_values(layout.clone(), values.clone()).unwrap();
        let again = ParamPack::from_parts(layout, &pack.to_parts()).unwrap();
        assert_eq!(again.values(), &values[..]);
    }

    #[test]
    fn blocks_partition_the_vector() {
        let layout = PackLayout::full(4, 3);
        let mut seen = vec![0usize; layout.len()];
        for b in layout.blocks() {
            for i in b.range() {
                seen[i] += 1;
            }
        }
        assert!(seen.iter().all(|&k| k == 1));
        assert_eq!(layout.len(), 3 * (16 + 4 + 1) + 16 + 4 + 1);
    }

    #[test]
    fn duplicate_or_out_of_range_fields_rejected() {
        assert!(PackLayout::new(2, 1, &[(Field::ObjectiveLinear, 0), (Field::ObjectiveLinear, 0)]).is_err());
        assert!(PackLayout::new(2, 1, &[(Field::ConstraintLinear(1), 0)]).is_err());
    }

    #[test]
    fn from_instance_then_materialize_reproduces_instance() {
        let inst = instance(3);
        let layout = Arc::new(PackLayout::full(3, 2));
        let pack = ParamPack::from_instance(layout, &inst).unwrap();
        let back = pack.materialize(&inst, 0.0).unwrap();
        assert!((back.objective_matrix() - inst.objective_matrix()).amax() < 1e-12);
        assert!((&back.constraints()[0].a - &inst.constraints()[0].a).amax() < 1e-12);
        assert_eq!(back.constraints()[1].b, inst.constraints()[1].b);
        assert_eq!(back.q(), 1.0);
    }

    #[test]
    fn partial_layout_keeps_template_fields() {
        let inst = instance(2);
        let layout = Arc::new(PackLayout::new(2, 2, &[(Field::ObjectiveLinear, 0), (Field::ConstraintFactor(0), 2)]).unwrap());
        let mut pack = ParamPack::from_instance(layout, &inst).unwrap();
        pack.values_mut()[0] = -3.0;
        let out = pack.materialize(&inst, 1e-6).unwrap();
        assert_eq!(out.c()[0], -3.0);
        assert_eq!(out.constraints()[1], QuadConstraint::linear(Vector::from_element(2, 1.0), -1.0));
        assert!((out.constraints()[0].a[(0, 0)] - (2.0 + 1e-6)).abs() < 1e-12);
    }

    #[test]
    fn pull_back_applies_factor_chain_rule() {
        let inst = instance(2);
        let layout = Arc::new(PackLayout::full(2, 2));
        let pack = ParamPack::from_instance(layout, &inst).unwrap();
        let mut g = InstanceGrad::zeros(2, 2);
        g.q_mat = Mat::identity(2, 2);
        g.c[1] = 4.0;
        let flat = pack.pull_back(&g).unwrap();
        let obj = pack.layout().block(Field::ObjectiveFactor).unwrap();
        // M = I (sqrt of I), G = I  →  2I
        assert_eq!(&flat[obj.range()], &[2.0, 0.0, 0.0, 2.0]);
        let lin = pack.layout().block(Field::ObjectiveLinear).unwrap();
        assert_eq!(&flat[lin.range()], &[0.0, 4.0]);
    }
}
