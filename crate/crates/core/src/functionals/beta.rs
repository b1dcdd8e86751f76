use crate::error::{invalid, Result};
use crate::flow::{seeds_in_ball, FlowHistory, MeasureKind, SeedRegion};

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0 / 3.0) {
        return invalid(format!("alpha must lie in (0, 1/3), got {alpha}"));
    }
    Ok(())
}

fn check_y(y: f64) -> Result<()> {
    if !(y >= 0.0) || y.is_infinite() {
        return invalid(format!("beta needs a finite y >= 0, got {y}"));
    }
    Ok(())
}

/// `β(y) = (1 + log(1 + y))^α`.
pub fn beta(y: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    check_y(y)?;
    Ok((1.0 + y.ln_1p()).powf(alpha))
}

/// `β′(y) = α (1 + log(1 + y))^{α−1} / (1 + y)`.
pub fn beta_prime(y: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    check_y(y)?;
    let l = 1.0 + y.ln_1p();
    Ok(alpha * l.powf(alpha - 1.0) / (1.0 + y))
}

/// `β″(y) = −α L^{α−2} (L + 1 − α) / (1 + y)²` with `L = 1 + log(1 + y)`.
pub fn beta_second(y: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    check_y(y)?;
    let l = 1.0 + y.ln_1p();
    Ok(-alpha * l.powf(alpha - 2.0) * (l + 1.0 - alpha) / ((1.0 + y) * (1.0 + y)))
}

/// Whether the seeded region contains the closed phase-space ball `B_r`.
pub(crate) fn covers_ball(region: &SeedRegion, dim: usize, r: f64) -> bool {
    match region {
        SeedRegion::Ball { radius } => *radius >= r,
        SeedRegion::Box { lower, upper } => {
            lower.len() == 2 * dim && lower.iter().zip(upper).all(|(l, u)| *l <= -r && *u >= r)
        }
    }
}

/// `Σ cellvol · β(max_s |V(s)|² / 2)` over lattice seeds starting in `B_r`.
pub fn beta_superlevel_functional(history: &FlowHistory, r: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let seeding = history
        .seeding()
        .ok_or_else(|| crate::Error::InvalidSpec("history carries no lattice seeding".into()))?;
    if !covers_ball(&seeding.region, history.dim(), r) {
        return invalid(format!("seeded region does not cover the ball of radius {r}"));
    }
    let speeds = history.max_speed();
    let mut acc = crate::sum::CompensatedSum::new();
    for (i, vol) in seeds_in_ball(history, r, MeasureKind::Lattice)? {
        acc.add(vol * beta(0.5 * speeds[i] * speeds[i], alpha)?);
    }
    Ok(acc.value())
}

/// Smallest `A` with `g(λ) ≤ A / β(λ²/2)` on the given grid.
pub fn fit_superlevel_constant(lambdas: &[f64], g: &[f64], alpha: f64) -> Result<f64> {
    if lambdas.len() != g.len() || lambdas.is_empty() {
        return invalid("threshold and measure grids must be nonempty and of equal length");
    }
    let mut a = 0.0_f64;
    for (&l, &m) in lambdas.iter().zip(g) {
        a = a.max(m * beta(0.5 * l * l, alpha)?);
    }
    Ok(a)
}

/// Chebyshev bound on `g(r, λ)` from the β-functional: trajectories leaving
/// `B_λ` from `B_r` within time `T` must exceed speed `μ = (λ − r)/(1 + T)`,
/// so `g ≤ B / β(μ²/2)`. `None` when `λ ≤ r`.
pub fn superlevel_chebyshev_bound(
    functional: f64,
    r: f64,
    lambda: f64,
    horizon: f64,
    alpha: f64,
) -> Result<Option<f64>> {
    if lambda <= r {
        return Ok(None);
    }
    let mu = (lambda - r) / (1.0 + horizon);
    Ok(Some(functional / beta(0.5 * mu * mu, alpha)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        assert_eq!(beta(0.0, 0.25).unwrap(), 1.0);
        let y = std::f64::consts::E - 1.0;
        assert!((beta(y, 0.25).unwrap() - 2f64.powf(0.25)).abs() < 1e-15);
        assert!(beta(1.0, 1.0 / 3.0).is_err());
        assert!(beta(1.0, 0.0).is_err());
        assert!(beta(-1.0, 0.2).is_err());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for &y in &[0.5, 5.0, 50.0] {
            let h = 1e-5 * (1.0 + y);
            let fd = (beta(y + h, 0.3).unwrap() - beta(y - h, 0.3).unwrap()) / (2.0 * h);
            assert!((fd - beta_prime(y, 0.3).unwrap()).abs() < 1e-6 * beta_prime(y, 0.3).unwrap().max(1e-3));
            let fd2 = (beta_prime(y + h, 0.3).unwrap() - beta_prime(y - h, 0.3).unwrap()) / (2.0 * h);
            assert!((fd2 - beta_second(y, 0.3).unwrap()).abs() < 1e-6 * fd2.abs().max(1e-3));
        }
    }
}
