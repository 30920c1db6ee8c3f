use crate::geometry::Vec2;

/// Symmetric 2×2 matrix `[[xx, xy], [xy, yy]]`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Sym2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Sym2 {
    pub const IDENTITY: Sym2 = Sym2 {
        xx: 1.0,
        xy: 0.0,
        yy: 1.0,
    };

    pub const fn new(xx: f64, xy: f64, yy: f64) -> Self {
        Self { xx, xy, yy }
    }

    /// `v vᵀ`.
    pub fn outer(v: Vec2) -> Self {
        Self::new(v.x * v.x, v.x * v.y, v.y * v.y)
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy
    }

    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    pub fn apply(&self, v: Vec2) -> Vec2 {
        Vec2::new(self.xx * v.x + self.xy * v.y, self.xy * v.x + self.yy * v.y)
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self::new(self.xx * k, self.xy * k, self.yy * k)
    }

    pub fn add(&self, o: &Sym2) -> Self {
        Self::new(self.xx + o.xx, self.xy + o.xy, self.yy + o.yy)
    }

    pub fn max_abs_diff(&self, o: &Sym2) -> f64 {
        (self.xx - o.xx)
            .abs()
            .max((self.xy - o.xy).abs())
            .max((self.yy - o.yy).abs())
    }

    /// Eigenvalues, largest first.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let mean = 0.5 * (self.xx + self.yy);
        let half_diff = 0.5 * (self.xx - self.yy);
        let disc = (half_diff * half_diff + self.xy * self.xy).sqrt();
        (mean + disc, mean - disc)
    }
}

/// Eigen-structure of a structure tensor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Eigen {
    /// Dominant direction (across edges).
    pub e1: Vec2,
    /// Orthogonal direction (along edges).
    pub e2: Vec2,
    pub lambda1: f64,
    pub lambda2: f64,
    pub coherence: f64,
}

const COHERENCE_EPS: f64 = 1e-8;
const TIE_GAP: f64 = 1e-6;

/// Eigen-decomposition and coherence `(λ1 − λ2)/(λ1 + λ2 + ε)` of a
/// symmetric PSD matrix. Near-equal eigenvalues fall back to the
/// coordinate axes.
pub fn eigen_coherence(s: &Sym2) -> Eigen {
    let (l1, l2) = s.eigenvalues();
    let l1 = l1.max(0.0);
    let l2 = l2.max(0.0).min(l1);
    let tie = l1 <= 0.0 || (l1 - l2) < TIE_GAP * l1;
    let e1 = if tie {
        Vec2::new(1.0, 0.0)
    } else {
        Vec2::from_angle(0.5 * (2.0 * s.xy).atan2(s.xx - s.yy))
    };
    Eigen {
        e1,
        e2: e1.perp(),
        lambda1: l1,
        lambda2: l2,
        coherence: (l1 - l2) / (l1 + l2 + COHERENCE_EPS),
    }
}

/// `D = d1·e1e1ᵀ + e2e2ᵀ` with `d1 = 1/(1 + βc)`: slow across the dominant
/// direction, unit speed along it.
pub fn diffusion_tensor(eig: &Eigen, beta: f64) -> Sym2 {
    if eig.coherence == 0.0 {
        return Sym2::IDENTITY;
    }
    let d1 = 1.0 / (1.0 + beta * eig.coherence);
    Sym2::outer(eig.e1).scaled(d1).add(&Sym2::outer(eig.e2))
}

/// Diffusion tensor for a prescribed coherent axis (the fast direction).
pub fn axis_tensor(coherent_axis: Vec2, coherence: f64, beta: f64) -> Sym2 {
    let e2 = coherent_axis.normalized();
    let eig = Eigen {
        e1: -e2.perp(),
        e2,
        lambda1: 0.0,
        lambda2: 0.0,
        coherence,
    };
    diffusion_tensor(&eig, beta)
}

/// Clamps the eigenvalues of `s` into `[lo, hi]`, keeping its eigenbasis.
pub fn project_spd(s: &Sym2, lo: f64, hi: f64) -> Sym2 {
    let (l1, l2) = s.eigenvalues();
    let (c1, c2) = (l1.clamp(lo, hi), l2.clamp(lo, hi));
    if (l1 - l2).abs() <= 1e-15 * l1.abs().max(1.0) {
        return Sym2::new(c1, 0.0, c1);
    }
    let e1 = Vec2::from_angle(0.5 * (2.0 * s.xy).atan2(s.xx - s.yy));
    Sym2::outer(e1)
        .scaled(c1)
        .add(&Sym2::outer(e1.perp()).scaled(c2))
}

/// Row-major field of symmetric tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorField {
    pub width: usize,
    pub height: usize,
    pub values: Vec<Sym2>,
}

impl TensorField {
    pub fn uniform(width: usize, height: usize, value: Sym2) -> Self {
        Self {
            width,
            height,
            values: vec![value; width * height],
        }
    }

    pub fn identity(width: usize, height: usize) -> Self {
        Self::uniform(width, height, Sym2::IDENTITY)
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> &Sym2 {
        &self.values[j * self.width + i]
    }
}
