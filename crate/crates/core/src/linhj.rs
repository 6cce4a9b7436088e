//! Discrete linear Hamiltonian systems: the quadratic left discrete
//! Hamiltonian, its step matrix, the discrete Riccati recurrence and the
//! propagation of Lagrangian affine spaces.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::newton::{condition_number, symplectic_defect};
use crate::types::{DiscreteHamiltonianLeft, DiscreteHamiltonianRight, DiscreteLagrangian, Vector};

pub type Matrix = DMatrix<f64>;

/// Condition estimates above this count as singular for the linear algebra here.
pub const LINEAR_SINGULAR_CONDITION: f64 = 1e12;

const SYMMETRY_TOL: f64 = 1e-12;
const LAGRANGIAN_TOL: f64 = 1e-10;
const MAP_SYMPLECTIC_TOL: f64 = 1e-10;

fn symmetrize(a: &Matrix) -> Matrix {
    (a + a.transpose()) * 0.5
}

fn asymmetry(a: &Matrix) -> f64 {
    (a - a.transpose()).amax() / (1.0 + a.amax())
}

/// `A⁻¹ B` by LU with partial pivoting, or `err` when `A` is ill-conditioned.
fn solve(a: &Matrix, b: &Matrix, err: impl Fn(f64) -> Error) -> Result<Matrix> {
    let condition = condition_number(a);
    if !(condition < LINEAR_SINGULAR_CONDITION) {
        return Err(err(condition));
    }
    a.clone().lu().solve(b).ok_or_else(|| err(condition))
}

fn singular_block(block: &'static str) -> impl Fn(f64) -> Error {
    move |condition| Error::SingularBlock { block, condition }
}

fn breakdown(block: &'static str) -> impl Fn(f64) -> Error {
    move |condition| Error::RiccatiBreakdown { block, condition }
}

fn column(v: &Vector) -> Matrix {
    Matrix::from_column_slice(v.len(), 1, v.as_slice())
}

/// `H⁻(p, q') = ½pᵀM⁻¹p + pᵀLq' + ½q'ᵀKq'`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticLeftHamiltonian {
    m: Matrix,
    k: Matrix,
    l: Matrix,
    m_inv: Matrix,
}

impl QuadraticLeftHamiltonian {
    pub fn new(m: Matrix, k: Matrix, l: Matrix) -> Result<Self> {
        let n = m.nrows();
        for (name, mat) in [("M", &m), ("K", &k), ("L", &l)] {
            if mat.nrows() != n || mat.ncols() != n {
                return Err(Error::Dimension(format!(
                    "{name} is {}x{}, expected {n}x{n}",
                    mat.nrows(),
                    mat.ncols()
                )));
            }
        }
        if asymmetry(&m) > SYMMETRY_TOL {
            return Err(Error::Invalid("M must be symmetric".into()));
        }
        if asymmetry(&k) > SYMMETRY_TOL {
            return Err(Error::Invalid("K must be symmetric".into()));
        }
        let m_inv = solve(&m, &Matrix::identity(n, n), singular_block("M"))?;
        solve(&l, &Matrix::identity(n, n), singular_block("L"))?;
        Ok(Self {
            m: symmetrize(&m),
            k: symmetrize(&k),
            l,
            m_inv: symmetrize(&m_inv),
        })
    }

    /// Scalar constructor for `n = 1`.
    pub fn scalar(m: f64, k: f64, l: f64) -> Result<Self> {
        Self::new(
            Matrix::from_element(1, 1, m),
            Matrix::from_element(1, 1, k),
            Matrix::from_element(1, 1, l),
        )
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn m(&self) -> &Matrix {
        &self.m
    }

    pub fn k(&self) -> &Matrix {
        &self.k
    }

    pub fn l(&self) -> &Matrix {
        &self.l
    }

    pub fn value(&self, p: &Vector, q_next: &Vector) -> f64 {
        0.5 * p.dot(&(&self.m_inv * p)) + p.dot(&(&self.l * q_next)) + 0.5 * q_next.dot(&(&self.k * q_next))
    }

    /// The left discrete Hamiltonian with analytic partials.
    pub fn to_left(&self) -> DiscreteHamiltonianLeft {
        let (a, b, c) = (self.clone(), self.clone(), self.clone());
        DiscreteHamiltonianLeft::new(move |p, qn| a.value(p, qn))
            .with_d1(move |p, qn| &b.m_inv * p + &b.l * qn)
            .with_d2(move |p, qn| c.l.transpose() * p + &c.k * qn)
    }

    /// The equivalent right discrete Hamiltonian `H⁺(q, p') = p'·q' + p·q + H⁻(p, q')`,
    /// where `(q', p)` is recovered from `(q, p')` through the step matrix.
    ///
    /// Requires the lower-right block `KL⁻¹M⁻¹ − Lᵀ` to be invertible.
    pub fn to_right(&self) -> Result<DiscreteHamiltonianRight> {
        let n = self.dim();
        let phi = step_matrix(self)?.matrix;
        let a = phi.view((0, 0), (n, n)).into_owned();
        let b = phi.view((0, n), (n, n)).into_owned();
        let c = phi.view((n, 0), (n, n)).into_owned();
        let d = phi.view((n, n), (n, n)).into_owned();
        let p_from_pn = solve(&d, &Matrix::identity(n, n), singular_block("KL⁻¹M⁻¹ − Lᵀ"))?;
        let p_from_q = -&p_from_pn * &c;
        let qn_from_q = &a + &b * &p_from_q;
        let qn_from_pn = &b * &p_from_pn;

        let recover = move |q: &Vector, pn: &Vector| -> (Vector, Vector) {
            let p = &p_from_q * q + &p_from_pn * pn;
            let qn = &qn_from_q * q + &qn_from_pn * pn;
            (p, qn)
        };
        let (r1, r2, r3) = (recover.clone(), recover.clone(), recover);
        let this = self.clone();
        Ok(DiscreteHamiltonianRight::new(move |q, pn| {
            let (p, qn) = r1(q, pn);
            pn.dot(&qn) + p.dot(q) + this.value(&p, &qn)
        })
        .with_d1(move |q, pn| r2(q, pn).0)
        .with_d2(move |q, pn| r3(q, pn).1))
    }

    /// The discrete Lagrangian `L_d(q, q') = −p·q − H⁻(p, q')` with
    /// `p = −M(q + Lq')`.
    pub fn to_lagrangian(&self) -> DiscreteLagrangian {
        let this = self.clone();
        let momentum = move |q: &Vector, qn: &Vector| -> Vector { -(&this.m * (q + &this.l * qn)) };
        let (m1, m2, m3) = (momentum.clone(), momentum.clone(), momentum);
        let (h1, h2) = (self.clone(), self.clone());
        DiscreteLagrangian::new(move |q, qn| {
            let p = m1(q, qn);
            -p.dot(q) - h1.value(&p, qn)
        })
        .with_d1(move |q, qn| -m2(q, qn))
        .with_d2(move |q, qn| {
            let p = m3(q, qn);
            -(h2.l.transpose() * p + &h2.k * qn)
        })
    }
}

/// The symplectic matrix of a discrete linear Hamiltonian system.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHamiltonianMap {
    pub matrix: Matrix,
}

impl LinearHamiltonianMap {
    pub fn new(matrix: Matrix) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || !matrix.nrows().is_multiple_of(2) {
            return Err(Error::Dimension(format!(
                "linear Hamiltonian map must be 2n x 2n, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let defect = symplectic_defect(&matrix);
        if !(defect <= MAP_SYMPLECTIC_TOL) {
            return Err(Error::Invalid(format!(
                "matrix is not symplectic (defect {defect:e})"
            )));
        }
        Ok(Self { matrix })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows() / 2
    }

    pub fn apply(&self, z: &Vector) -> Vector {
        &self.matrix * z
    }
}

/// `[[−L⁻¹, −L⁻¹M⁻¹], [KL⁻¹, KL⁻¹M⁻¹ − Lᵀ]]`.
pub fn step_matrix(h: &QuadraticLeftHamiltonian) -> Result<LinearHamiltonianMap> {
    let n = h.dim();
    let l_inv = solve(&h.l, &Matrix::identity(n, n), singular_block("L"))?;
    let l_inv_m_inv = solve(&h.l, &h.m_inv, singular_block("L"))?;
    let k_l_inv = &h.k * &l_inv;
    let mut phi = Matrix::zeros(2 * n, 2 * n);
    phi.view_mut((0, 0), (n, n)).copy_from(&(-&l_inv));
    phi.view_mut((0, n), (n, n)).copy_from(&(-&l_inv_m_inv));
    phi.view_mut((n, 0), (n, n)).copy_from(&k_l_inv);
    phi.view_mut((n, n), (n, n))
        .copy_from(&(&h.k * &l_inv_m_inv - h.l.transpose()));
    LinearHamiltonianMap::new(phi)
}

/// `S(q) = ½qᵀAq + bᵀq + c` with `A` symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticGeneratingFunction {
    pub a: Matrix,
    pub b: Vector,
    pub c: f64,
}

impl QuadraticGeneratingFunction {
    /// Symmetrizes `a` on construction.
    pub fn new(a: Matrix, b: Vector, c: f64) -> Result<Self> {
        if a.nrows() != a.ncols() || a.nrows() != b.len() {
            return Err(Error::Dimension(format!(
                "generating function has A {}x{} and b of length {}",
                a.nrows(),
                a.ncols(),
                b.len()
            )));
        }
        Ok(Self {
            a: symmetrize(&a),
            b,
            c,
        })
    }

    pub fn zero(n: usize) -> Self {
        Self {
            a: Matrix::zeros(n, n),
            b: Vector::zeros(n),
            c: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn value(&self, q: &Vector) -> f64 {
        0.5 * q.dot(&(&self.a * q)) + self.b.dot(q) + self.c
    }

    pub fn gradient(&self, q: &Vector) -> Vector {
        &self.a * q + &self.b
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            a: &self.a * factor,
            b: &self.b * factor,
            c: self.c * factor,
        }
    }

    /// The Lagrangian affine space `graph dS = {(q, Aq + b)}`.
    pub fn graph(&self) -> Result<LagrangianAffineSpace> {
        let n = self.dim();
        let mut base = Vector::zeros(2 * n);
        base.rows_mut(n, n).copy_from(&self.b);
        let mut basis = Matrix::zeros(2 * n, n);
        basis.view_mut((0, 0), (n, n)).copy_from(&Matrix::identity(n, n));
        basis.view_mut((n, 0), (n, n)).copy_from(&self.a);
        LagrangianAffineSpace::new(base, basis)
    }
}

/// One step of the discrete Riccati recurrence for `(A_k, b_k, c_k)`.
pub fn riccati_step(
    s: &QuadraticGeneratingFunction,
    h: &QuadraticLeftHamiltonian,
) -> Result<QuadraticGeneratingFunction> {
    let n = h.dim();
    if s.dim() != n {
        return Err(Error::Dimension(format!(
            "generating function has dimension {}, Hamiltonian {n}",
            s.dim()
        )));
    }
    // A M⁻¹ = (M⁻¹ Aᵀ)ᵀ with M symmetric.
    let a_m_inv = solve(&h.m, &s.a.transpose(), singular_block("M"))?.transpose();
    let shifted = Matrix::identity(n, n) + a_m_inv;
    let a_l = &s.a * &h.l;
    let mut rhs = Matrix::zeros(n, n + 1);
    rhs.view_mut((0, 0), (n, n)).copy_from(&a_l);
    rhs.view_mut((0, n), (n, 1)).copy_from(&column(&s.b));
    let solved = solve(&shifted, &rhs, breakdown("I + A M⁻¹"))?;
    let lt = h.l.transpose();
    let a_next = &lt * solved.view((0, 0), (n, n)) - &h.k;
    let b_next = -(&lt * solved.view((0, n), (n, 1)));
    let m_plus_a = &h.m + &s.a;
    let mab = solve(&m_plus_a, &column(&s.b), breakdown("M + A"))?;
    let c_next = s.c - 0.5 * s.b.dot(&mab.column(0));
    QuadraticGeneratingFunction::new(a_next, b_next.column(0).into_owned(), c_next)
}

/// `k` Riccati steps, returning `S_0, ..., S_k`.
pub fn riccati_sequence(
    s0: &QuadraticGeneratingFunction,
    h: &QuadraticLeftHamiltonian,
    steps: usize,
) -> Result<Vec<QuadraticGeneratingFunction>> {
    let mut seq = Vec::with_capacity(steps + 1);
    seq.push(s0.clone());
    for k in 0..steps {
        let next = riccati_step(&seq[k], h).map_err(|e| e.context(format!("Riccati step {k}")))?;
        seq.push(next);
    }
    Ok(seq)
}

/// `A ↦ [KL⁻¹ + (KL⁻¹M⁻¹ − Lᵀ)A](−L⁻¹ − L⁻¹M⁻¹A)⁻¹`, the Riccati map written
/// as a matrix fractional transformation.
pub fn riccati_fractional_step(a: &Matrix, h: &QuadraticLeftHamiltonian) -> Result<Matrix> {
    let n = h.dim();
    let l_inv = solve(&h.l, &Matrix::identity(n, n), singular_block("L"))?;
    let k_l_inv = &h.k * &l_inv;
    let l_inv_m_inv = &l_inv * &h.m_inv;
    let numerator = &k_l_inv + (&k_l_inv * &h.m_inv - h.l.transpose()) * a;
    let denominator = -&l_inv - &l_inv_m_inv * a;
    // X D = N  ⇔  Dᵀ Xᵀ = Nᵀ.
    let xt = solve(
        &denominator.transpose(),
        &numerator.transpose(),
        breakdown("−L⁻¹ − L⁻¹M⁻¹A"),
    )?;
    Ok(xt.transpose())
}

/// `f⁻(q) = −L⁻¹(I + M⁻¹A)q − L⁻¹M⁻¹b`.
pub fn f_minus_linear(
    s: &QuadraticGeneratingFunction,
    h: &QuadraticLeftHamiltonian,
    q: &Vector,
) -> Result<Vector> {
    let inner = q + &h.m_inv * s.gradient(q);
    let x = solve(&h.l, &column(&-inner), singular_block("L"))?;
    Ok(x.column(0).into_owned())
}

/// Translate `z0 + span(basis)` of a Lagrangian subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianAffineSpace {
    pub base: Vector,
    pub basis: Matrix,
}

/// Diagnostics of [`is_lagrangian`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagrangianDefect {
    /// `max |v_iᵀ𝕁v_j|` over column pairs.
    pub pairing: f64,
    pub rank: usize,
    pub expected_rank: usize,
}

impl LagrangianDefect {
    pub fn is_lagrangian(&self, tol: f64) -> bool {
        self.rank == self.expected_rank && self.pairing <= tol
    }
}

fn numerical_rank(m: &Matrix) -> usize {
    if m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    sv.iter().filter(|s| **s > max * 1e-12 && **s > 0.0).count()
}

/// Symplectic pairing defect and rank of a `2n × m` basis.
pub fn is_lagrangian(basis: &Matrix) -> LagrangianDefect {
    let n = basis.nrows() / 2;
    let mut pairing = 0.0_f64;
    for i in 0..basis.ncols() {
        for j in (i + 1)..basis.ncols() {
            let (vi, vj) = (basis.column(i), basis.column(j));
            let omega = (0..n).map(|r| vi[r] * vj[n + r] - vi[n + r] * vj[r]).sum::<f64>();
            pairing = pairing.max(omega.abs());
        }
    }
    LagrangianDefect {
        pairing,
        rank: numerical_rank(basis),
        expected_rank: n,
    }
}

fn orthonormalize(basis: &Matrix) -> Matrix {
    let q = basis.clone().qr().q();
    q.columns(0, basis.ncols()).into_owned()
}

impl LagrangianAffineSpace {
    /// Validates the shape, rank and Lagrangian property of `basis`; the stored
    /// basis is orthonormalized.
    pub fn new(base: Vector, basis: Matrix) -> Result<Self> {
        let rows = basis.nrows();
        if !rows.is_multiple_of(2) || base.len() != rows || basis.ncols() != rows / 2 {
            return Err(Error::Dimension(format!(
                "affine space needs a 2n-vector base and 2n x n basis, got base {} and basis {}x{}",
                base.len(),
                rows,
                basis.ncols()
            )));
        }
        let n = rows / 2;
        let rank = numerical_rank(&basis);
        if rank < n {
            return Err(Error::Degenerate { rank, expected: n });
        }
        let basis = orthonormalize(&basis);
        let defect = is_lagrangian(&basis);
        if defect.pairing > LAGRANGIAN_TOL {
            return Err(Error::Invalid(format!(
                "basis does not span a Lagrangian subspace (pairing {:e})",
                defect.pairing
            )));
        }
        Ok(Self { base, basis })
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }
}

/// Image of a Lagrangian affine space under a linear symplectic map.
pub fn propagate_affine(
    space: &LagrangianAffineSpace,
    map: &LinearHamiltonianMap,
) -> Result<LagrangianAffineSpace> {
    if map.dim() != space.dim() {
        return Err(Error::Dimension(format!(
            "map acts on dimension {}, space has dimension {}",
            map.dim(),
            space.dim()
        )));
    }
    let image = &map.matrix * &space.basis;
    let rank = numerical_rank(&image);
    if rank < space.dim() {
        return Err(Error::Degenerate {
            rank,
            expected: space.dim(),
        });
    }
    LagrangianAffineSpace::new(map.apply(&space.base), image)
}

/// The quadratic generating function whose differential's graph is `space`.
///
/// The additive constant is fixed to zero.
pub fn extract_generating(space: &LagrangianAffineSpace) -> Result<QuadraticGeneratingFunction> {
    let n = space.dim();
    let x = space.basis.view((0, 0), (n, n)).into_owned();
    let y = space.basis.view((n, 0), (n, n)).into_owned();
    // The basis is orthonormal, so σ_min(X) measures the angle to the fibre.
    let sigma_min = x.singular_values().iter().cloned().fold(f64::INFINITY, f64::min);
    if !(sigma_min > 1.0 / LINEAR_SINGULAR_CONDITION) {
        return Err(Error::Transversality {
            condition: 1.0 / sigma_min,
        });
    }
    // A = Y X⁻¹  ⇔  Xᵀ Aᵀ = Yᵀ.
    let at = solve(&x.transpose(), &y.transpose(), |condition| Error::Transversality {
        condition,
    })?;
    let a = symmetrize(&at.transpose());
    let q0 = space.base.rows(0, n).into_owned();
    let p0 = space.base.rows(n, n).into_owned();
    let b = p0 - &a * q0;
    QuadraticGeneratingFunction::new(a, b, 0.0)
}
