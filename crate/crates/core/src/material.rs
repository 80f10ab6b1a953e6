//! Constitutive data: elastic density W and its partial derivatives, the
//! damage-dependent stiffness C(z), Vegard eigenstrain, the double-well
//! chemical energy with its convex/concave split, the damage potential f and
//! the mobility, plus a sampling validator for the standing assumptions.

use crate::grid::SymTensor;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MaterialError {
    #[error("damage value {0} outside [0,1]")]
    DamageOutOfRange(f64),
    #[error("material parameter {name} = {value} is invalid: {reason}")]
    BadParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
}

/// Mobility law m(c,z); both variants respect fixed bounds [C1, C2].
#[derive(Debug, Clone, Copy)]
pub enum MobilityLaw {
    Constant {
        m0: f64,
    },
    /// m0 + m1*z clamped to the bounds spanned by the endpoints.
    Affine {
        m0: f64,
        m1: f64,
    },
}

impl MobilityLaw {
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            MobilityLaw::Constant { m0 } => (m0, m0),
            MobilityLaw::Affine { m0, m1 } => {
                let a = m0;
                let b = m0 + m1;
                (a.min(b), a.max(b))
            }
        }
    }
}

/// All constitutive parameters. Immutable after construction.
#[derive(Debug, Clone)]
pub struct MaterialModel {
    pub dim: usize,
    /// Coercivity constant in C(z)e:e >= eta |e|^2.
    pub eta: f64,
    /// Lame parameters of the base tensor C0 e = 2 mu_l e + lambda_l tr(e) I.
    pub lambda_l: f64,
    pub mu_l: f64,
    /// Vegard slope: e*(c) = c * ehat.
    pub ehat: SymTensor,
    /// Damage threshold coefficient: f(z) = alpha (1 - z).
    pub alpha: f64,
    /// Overall scale of the double well Psi(c) = scale/4 (c^2-1)^2.
    pub psi_scale: f64,
    pub mobility: MobilityLaw,
    /// Damage gradient exponent, must exceed the spatial dimension.
    pub p: f64,
    /// Growth-check exponent used only by the validator.
    pub two_star: f64,
    /// Stiffness modulation C(z) = (eta + intercept + slope*z) C0.
    /// Defaults (0, 1); the validator flags non-monotone choices.
    pub stiffness_intercept: f64,
    pub stiffness_slope: f64,
}

impl MaterialModel {
    /// Simplest instantiation satisfying every standing assumption.
    pub fn default_for_dim(dim: usize) -> Self {
        MaterialModel {
            dim,
            eta: 0.1,
            lambda_l: 0.0,
            mu_l: 0.5,
            ehat: if dim == 1 {
                SymTensor::scalar(1.0)
            } else {
                SymTensor::identity(2)
            },
            alpha: 0.2,
            psi_scale: 1.0,
            mobility: MobilityLaw::Constant { m0: 1.0 },
            p: if dim == 1 { 2.0 } else { 4.0 },
            two_star: 6.0,
            stiffness_intercept: 0.0,
            stiffness_slope: 1.0,
        }
    }

    pub fn validate_parameters(&self) -> Result<(), MaterialError> {
        if self.eta <= 0.0 {
            return Err(MaterialError::BadParameter {
                name: "eta",
                value: self.eta,
                reason: "coercivity constant must be positive",
            });
        }
        if self.mu_l <= 0.0 {
            return Err(MaterialError::BadParameter {
                name: "mu",
                value: self.mu_l,
                reason: "shear parameter must be positive",
            });
        }
        if self.lambda_l < 0.0 {
            return Err(MaterialError::BadParameter {
                name: "lambda",
                value: self.lambda_l,
                reason: "must be nonnegative",
            });
        }
        if self.alpha < 0.0 {
            return Err(MaterialError::BadParameter {
                name: "alpha",
                value: self.alpha,
                reason: "threshold coefficient must be nonnegative",
            });
        }
        let (c1, _) = self.mobility.bounds();
        if c1 <= 0.0 {
            return Err(MaterialError::BadParameter {
                name: "mobility",
                value: c1,
                reason: "lower mobility bound must be positive",
            });
        }
        Ok(())
    }

    fn check_z(&self, z: f64) -> Result<(), MaterialError> {
        if !(0.0..=1.0).contains(&z) {
            return Err(MaterialError::DamageOutOfRange(z));
        }
        Ok(())
    }

    /// Base tensor: C0 e = 2 mu e + lambda tr(e) I.
    pub fn base_apply(&self, e: &SymTensor) -> SymTensor {
        let tr = e.trace(self.dim);
        let mut out = e.scale(2.0 * self.mu_l);
        out.xx += self.lambda_l * tr;
        if self.dim == 2 {
            out.yy += self.lambda_l * tr;
        }
        out
    }

    /// Scalar modulation of C(z) = stiffness_scale(z) * C0.
    #[inline]
    pub fn stiffness_scale(&self, z: f64) -> f64 {
        self.eta + self.stiffness_intercept + self.stiffness_slope * z
    }

    /// d/dz of the modulation; constant for the affine law.
    #[inline]
    pub fn stiffness_scale_prime(&self) -> f64 {
        self.stiffness_slope
    }

    /// C(z) e.
    pub fn stiffness_apply(&self, z: f64, e: &SymTensor) -> Result<SymTensor, MaterialError> {
        self.check_z(z)?;
        Ok(self.base_apply(e).scale(self.stiffness_scale(z)))
    }

    /// Vegard's law e*(c) = c * ehat.
    pub fn eigenstrain(&self, c: f64) -> SymTensor {
        self.ehat.scale(c)
    }

    /// W, W_c, W_e, W_z at a point; unchecked fast path for assembly loops
    /// (z is guaranteed feasible there by the clamp projection).
    #[inline]
    pub fn elastic_eval(&self, c: f64, e: &SymTensor, z: f64) -> ElasticPoint {
        debug_assert!((-1e-12..=1.0 + 1e-12).contains(&z));
        let mismatch = e.sub(&self.eigenstrain(c));
        let base = self.base_apply(&mismatch);
        let quad = base.contract(&mismatch); // C0 (e-e*) : (e-e*)
        let scale = self.stiffness_scale(z);
        ElasticPoint {
            w: 0.5 * scale * quad,
            w_c: -scale * base.contract(&self.ehat),
            w_e: base.scale(scale),
            w_z: 0.5 * self.stiffness_scale_prime() * quad,
        }
    }

    /// W(c, e, z) = 1/2 C(z)(e - e*(c)) : (e - e*(c)).
    pub fn elastic_energy(&self, c: f64, e: &SymTensor, z: f64) -> Result<f64, MaterialError> {
        self.check_z(z)?;
        Ok(self.elastic_eval(c, e, z).w)
    }

    pub fn elastic_dc(&self, c: f64, e: &SymTensor, z: f64) -> Result<f64, MaterialError> {
        self.check_z(z)?;
        Ok(self.elastic_eval(c, e, z).w_c)
    }

    pub fn elastic_de(&self, c: f64, e: &SymTensor, z: f64) -> Result<SymTensor, MaterialError> {
        self.check_z(z)?;
        Ok(self.elastic_eval(c, e, z).w_e)
    }

    pub fn elastic_dz(&self, c: f64, e: &SymTensor, z: f64) -> Result<f64, MaterialError> {
        self.check_z(z)?;
        Ok(self.elastic_eval(c, e, z).w_z)
    }

    /// Convex part Psi_1(c) = s (c^4/4 + 1/4).
    pub fn psi1(&self, c: f64) -> f64 {
        self.psi_scale * (0.25 * c.powi(4) + 0.25)
    }

    /// Concave remainder Psi_2(c) = -s c^2 / 2.
    pub fn psi2(&self, c: f64) -> f64 {
        -self.psi_scale * 0.5 * c * c
    }

    /// Psi = Psi_1 + Psi_2 = s/4 (c^2 - 1)^2.
    pub fn chemical_energy(&self, c: f64) -> f64 {
        self.psi1(c) + self.psi2(c)
    }

    pub fn psi_prime(&self, c: f64) -> f64 {
        self.psi_scale * (c.powi(3) - c)
    }

    /// f(z) = alpha (1 - z); damage growth costs energy until the elastic
    /// driving force exceeds the threshold alpha.
    pub fn damage_potential(&self, z: f64) -> Result<f64, MaterialError> {
        self.check_z(z)?;
        Ok(self.alpha * (1.0 - z))
    }

    pub fn f_prime(&self) -> f64 {
        -self.alpha
    }

    pub fn mobility(&self, _c: f64, z: f64) -> f64 {
        match self.mobility {
            MobilityLaw::Constant { m0 } => m0,
            MobilityLaw::Affine { m0, m1 } => {
                let (c1, c2) = self.mobility.bounds();
                (m0 + m1 * z).clamp(c1, c2)
            }
        }
    }

    /// Samples the standing assumptions and reports pass/fail with worst margins.
    pub fn validate_assumptions(&self, seed: u64) -> AssumptionReport {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut checks = Vec::new();
        let z_grid: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();

        // Coercivity C(z)e:e >= eta |e|^2 and monotonicity C'(z)e:e >= 0
        // on random unit-Frobenius symmetric strains.
        let mut worst_coercive = f64::INFINITY;
        let mut worst_monotone = f64::INFINITY;
        for _ in 0..200 {
            let e = self.random_unit_strain(&mut rng);
            let norm2 = e.contract(&e);
            let quad = self.base_apply(&e).contract(&e);
            for &z in &z_grid {
                worst_coercive =
                    worst_coercive.min(self.stiffness_scale(z) * quad - self.eta * norm2);
            }
            worst_monotone = worst_monotone.min(self.stiffness_scale_prime() * quad);
        }
        checks.push(Check::new(
            "stiffness coercivity C(z)e:e >= eta|e|^2",
            worst_coercive >= -1e-12,
            worst_coercive,
        ));
        checks.push(Check::new(
            "stiffness monotonicity C'(z)e:e >= 0",
            worst_monotone >= -1e-12,
            worst_monotone,
        ));

        // Mobility bounds on a (c, z) sample box.
        let (c1, c2) = self.mobility.bounds();
        let mut worst_mob = f64::INFINITY;
        for _ in 0..100 {
            let c = rng.gen_range(-3.0..3.0);
            let z = rng.gen_range(0.0..1.0);
            let m = self.mobility(c, z);
            worst_mob = worst_mob.min((m - c1).min(c2 - m));
        }
        checks.push(Check::new(
            "mobility bounds C1 <= m <= C2",
            worst_mob >= -1e-12 && c1 > 0.0,
            worst_mob,
        ));

        // Psi_1 convex and nonnegative: second differences on a sample grid.
        let cs: Vec<f64> = (0..81).map(|i| -4.0 + i as f64 * 0.1).collect();
        let mut worst_convex = f64::INFINITY;
        let mut worst_psi1 = f64::INFINITY;
        for w in cs.windows(3) {
            let dd = self.psi1(w[0]) - 2.0 * self.psi1(w[1]) + self.psi1(w[2]);
            worst_convex = worst_convex.min(dd);
        }
        for &c in &cs {
            worst_psi1 = worst_psi1.min(self.psi1(c));
        }
        checks.push(Check::new(
            "Psi_1 convex (second differences >= 0)",
            worst_convex >= -1e-12,
            worst_convex,
        ));
        checks.push(Check::new("Psi_1 >= 0", worst_psi1 >= -1e-15, worst_psi1));

        // Split identity Psi = Psi_1 + Psi_2 on the sample grid.
        let worst_split = cs
            .iter()
            .map(|&c| (self.chemical_energy(c) - self.psi1(c) - self.psi2(c)).abs())
            .fold(0.0, f64::max);
        checks.push(Check::new(
            "split identity Psi = Psi_1 + Psi_2",
            worst_split <= 1e-14,
            -worst_split,
        ));

        // Growth conditions: report the sampled constants.
        let growth = cs
            .iter()
            .map(|&c| self.psi_prime(c).abs() / (1.0 + c.abs().powf(self.two_star / 2.0)))
            .fold(0.0, f64::max);
        checks.push(Check::new(
            "growth |Psi'(c)| <= C(1+|c|^{2*/2})",
            growth.is_finite(),
            growth,
        ));
        let growth2 = cs
            .iter()
            .map(|&c| (self.psi_scale * c).abs() / (1.0 + c.abs()))
            .fold(0.0, f64::max);
        checks.push(Check::new(
            "growth |Psi_2'(c)| <= C(1+|c|)",
            growth2.is_finite(),
            growth2,
        ));

        // f >= 0 on [0,1].
        let worst_f = z_grid
            .iter()
            .map(|&z| self.alpha * (1.0 - z))
            .fold(f64::INFINITY, f64::min);
        checks.push(Check::new("f >= 0 on [0,1]", worst_f >= -1e-15, worst_f));

        // Exponent condition p > n.
        let margin = self.p - self.dim as f64;
        checks.push(Check::new("exponent p > n", margin > 0.0, margin));

        AssumptionReport { checks }
    }

    fn random_unit_strain(&self, rng: &mut ChaCha8Rng) -> SymTensor {
        let mut e = if self.dim == 1 {
            SymTensor::scalar(rng.gen_range(-1.0..1.0))
        } else {
            SymTensor::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            )
        };
        let norm = e.contract(&e).sqrt();
        if norm > 1e-12 {
            e = e.scale(1.0 / norm);
        } else {
            e = SymTensor::identity(self.dim).scale(1.0 / (self.dim as f64).sqrt());
        }
        e
    }
}

/// W and its three partial derivatives at one evaluation point.
#[derive(Debug, Clone, Copy)]
pub struct ElasticPoint {
    pub w: f64,
    pub w_c: f64,
    pub w_e: SymTensor,
    pub w_z: f64,
}

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    /// Worst-case margin; negative means the inequality failed by that much.
    pub margin: f64,
}

impl Check {
    fn new(name: &'static str, passed: bool, margin: f64) -> Self {
        Check {
            name,
            passed,
            margin,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AssumptionReport {
    pub checks: Vec<Check>,
}

impl AssumptionReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl std::fmt::Display for AssumptionReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "  [{}] {} (worst margin {:.3e})",
                if c.passed { "pass" } else { "FAIL" },
                c.name,
                c.margin
            )?;
        }
        Ok(())
    }
}
