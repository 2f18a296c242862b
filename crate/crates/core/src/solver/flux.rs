use serde::{Deserialize, Serialize};

/// Interface flux for `F(u) = u (1 - u) * factor`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FluxScheme {
    LocalLaxFriedrichs,
    Godunov,
}

impl std::fmt::Display for FluxScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FluxScheme::LocalLaxFriedrichs => "llf",
            FluxScheme::Godunov => "godunov",
        })
    }
}

impl std::str::FromStr for FluxScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "llf" | "local-lax-friedrichs" => Ok(FluxScheme::LocalLaxFriedrichs),
            "godunov" => Ok(FluxScheme::Godunov),
            other => Err(format!("unknown flux scheme `{other}` (expected llf | godunov)")),
        }
    }
}

#[inline]
fn g(u: f64) -> f64 {
    u * (1.0 - u)
}

/// Numerical flux between states `u_left` and `u_right` with the slow-down
/// factor frozen at its interface value.
#[inline]
pub fn numerical_flux(u_left: f64, u_right: f64, factor: f64, scheme: FluxScheme) -> f64 {
    match scheme {
        FluxScheme::LocalLaxFriedrichs => {
            let alpha = (1.0 - 2.0 * u_left).abs().max((1.0 - 2.0 * u_right).abs()) * factor;
            0.5 * factor * (g(u_left) + g(u_right)) - 0.5 * alpha * (u_right - u_left)
        }
        FluxScheme::Godunov => {
            // g is concave with its maximum at the sonic point 1/2.
            let flux = if u_left <= u_right {
                g(u_left).min(g(u_right))
            } else if u_right <= 0.5 && 0.5 <= u_left {
                0.25
            } else {
                g(u_left).max(g(u_right))
            };
            factor * flux
        }
    }
}

/// Characteristic speed `|1 - 2u| * factor`.
#[inline]
pub fn wave_speed(u: f64, factor: f64) -> f64 {
    (1.0 - 2.0 * u).abs() * factor
}
