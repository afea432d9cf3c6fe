//! Gauss–Legendre rules and composite integration over boxes.

use std::f64::consts::PI;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let step = p / d;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss–Legendre rule mapped to [a, b]; nodes paired with weights.
#[derive(Debug, Clone)]
pub struct Rule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Rule {
    pub fn new(order: usize) -> Self {
        let (nodes, weights) = gauss_legendre(order);
        Rule { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Mapped `(node, weight)` pairs for the interval [a, b].
    pub fn on(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(x, w)| (mid + half * x, half * w))
    }
}

/// Splits [lo, hi] at the integers and at every breakpoint strictly inside,
/// returning the sorted subinterval endpoints.
pub fn split_points(lo: f64, hi: f64, breakpoints: &[f64]) -> Vec<f64> {
    let mut pts = vec![lo, hi];
    let mut k = lo.floor() + 1.0;
    while k < hi {
        pts.push(k);
        k += 1.0;
    }
    pts.extend(breakpoints.iter().copied().filter(|&b| b > lo && b < hi));
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    pts
}

/// Tensor-product composite quadrature of `f` over the box `[lo, hi]^dim`,
/// with every axis split at integers and at `breakpoints`.
pub fn integrate_box<F>(f: F, dim: usize, lo: f64, hi: f64, breakpoints: &[f64], rule: &Rule) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    if hi <= lo {
        return 0.0;
    }
    let pts = split_points(lo, hi, breakpoints);
    let axis: Vec<(f64, f64)> = pts
        .windows(2)
        .flat_map(|w| rule.on(w[0], w[1]).collect::<Vec<_>>())
        .collect();
    match dim {
        1 => axis.iter().map(|&(x, w)| w * f(&[x])).sum(),
        2 => {
            let mut total = 0.0;
            for &(x, wx) in &axis {
                let mut row = 0.0;
                for &(y, wy) in &axis {
                    row += wy * f(&[x, y]);
                }
                total += wx * row;
            }
            total
        }
        _ => panic!("integrate_box supports dimensions 1 and 2"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_integrates_polynomials_exactly() {
        let rule = Rule::new(4);
        // exact through degree 7
        let integral: f64 = rule.on(0.0, 2.0).map(|(x, w)| w * x.powi(7)).sum();
        assert!((integral - 2f64.powi(8) / 8.0).abs() < 1e-12);
    }

    #[test]
    fn weights_sum_to_two() {
        for n in 1..12 {
            let (_, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13, "n = {n}");
        }
    }

    #[test]
    fn split_points_include_integers_and_breaks() {
        let p = split_points(-0.5, 2.5, &[0.25, 7.0]);
        assert_eq!(p, vec![-0.5, 0.0, 0.25, 1.0, 2.0, 2.5]);
    }

    #[test]
    fn box_integral_2d() {
        let rule = Rule::new(3);
        let v = integrate_box(|x| x[0] * x[1], 2, 0.0, 2.0, &[], &rule);
        assert!((v - 4.0).abs() < 1e-12);
    }
}
