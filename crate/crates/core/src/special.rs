//! Modified Bessel functions of the first kind, orders 0 and 1.
//!
//! Power series up to `|x| = 15`, Hankel asymptotic expansion above. Scaled
//! variants `e^{-|x|} I_n(x)` avoid overflow and are what the beam-wandering
//! model actually consumes.

const SWITCHOVER: f64 = 15.0;

fn series(order: u32, x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = if order == 0 { 1.0 } else { 0.5 * x };
    let mut sum = term;
    let n = f64::from(order);
    for k in 1..200 {
        let k = f64::from(k);
        term *= q / (k * (k + n));
        sum += term;
        if term < f64::EPSILON * 0.1 * sum {
            break;
        }
    }
    sum
}

/// `√(2πx) e^{-x} I_n(x)` from the large-argument expansion.
fn asymptotic_scaled(order: u32, x: f64) -> f64 {
    let mu = 4.0 * f64::from(order * order);
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..60 {
        let odd = f64::from(2 * k - 1);
        let next = -term * (mu - odd * odd) / (f64::from(k) * 8.0 * x);
        if next.abs() >= term.abs() {
            break;
        }
        term = next;
        sum += term;
        if term.abs() < f64::EPSILON * 0.1 * sum.abs() {
            break;
        }
    }
    sum
}

/// `e^{-|x|} I₀(x)`.
pub fn bessel_i0e(x: f64) -> f64 {
    let ax = x.abs();
    if ax <= SWITCHOVER {
        series(0, ax) * (-ax).exp()
    } else {
        asymptotic_scaled(0, ax) / (2.0 * std::f64::consts::PI * ax).sqrt()
    }
}

/// `e^{-|x|} I₁(x)`.
pub fn bessel_i1e(x: f64) -> f64 {
    let ax = x.abs();
    let v = if ax <= SWITCHOVER {
        series(1, ax) * (-ax).exp()
    } else {
        asymptotic_scaled(1, ax) / (2.0 * std::f64::consts::PI * ax).sqrt()
    };
    v.copysign(x)
}

pub fn bessel_i0(x: f64) -> f64 {
    let ax = x.abs();
    if ax <= SWITCHOVER {
        series(0, ax)
    } else {
        bessel_i0e(ax) * ax.exp()
    }
}

#[cfg(test)]
pub fn bessel_i1(x: f64) -> f64 {
    let ax = x.abs();
    let v = if ax <= SWITCHOVER {
        series(1, ax)
    } else {
        bessel_i1e(ax) * ax.exp()
    };
    v.copysign(x)
}

/// `I₀(x) − 1` without cancellation for small `x`.
pub fn bessel_i0m1(x: f64) -> f64 {
    let ax = x.abs();
    if ax > 1.0 {
        return bessel_i0(ax) - 1.0;
    }
    let q = 0.25 * ax * ax;
    let mut term = q;
    let mut sum = q;
    for k in 2..100 {
        let k = f64::from(k);
        term *= q / (k * k);
        sum += term;
        if term < f64::EPSILON * 0.1 * sum {
            break;
        }
    }
    sum
}
