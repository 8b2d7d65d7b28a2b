//! Exact solution of the 1D Riemann problem for a perfect gas (two-rarefaction
//! / two-shock Newton iteration on the star pressure).

#[derive(Clone, Copy, Debug)]
pub struct State {
    pub rho: f64,
    pub u: f64,
    pub p: f64,
}

fn sound(s: &State, g: f64) -> f64 {
    (g * s.p / s.rho).sqrt()
}

/// Pressure function f_K(p) and its derivative.
fn wave(p: f64, s: &State, g: f64) -> (f64, f64) {
    let c = sound(s, g);
    if p > s.p {
        let a = 2.0 / ((g + 1.0) * s.rho);
        let b = (g - 1.0) / (g + 1.0) * s.p;
        let q = (a / (p + b)).sqrt();
        ((p - s.p) * q, q * (1.0 - 0.5 * (p - s.p) / (p + b)))
    } else {
        let r = p / s.p;
        let e = (g - 1.0) / (2.0 * g);
        (2.0 * c / (g - 1.0) * (r.powf(e) - 1.0), r.powf(-(g + 1.0) / (2.0 * g)) / (s.rho * c))
    }
}

pub fn star(l: &State, r: &State, g: f64) -> (f64, f64) {
    let mut p = 0.5 * (l.p + r.p);
    for _ in 0..100 {
        let (fl, dl) = wave(p, l, g);
        let (fr, dr) = wave(p, r, g);
        let next = (p - (fl + fr + r.u - l.u) / (dl + dr)).max(1e-12);
        let done = (next - p).abs() / (0.5 * (next + p)) < 1e-14;
        p = next;
        if done {
            break;
        }
    }
    let (fl, _) = wave(p, l, g);
    let (fr, _) = wave(p, r, g);
    (p, 0.5 * (l.u + r.u) + 0.5 * (fr - fl))
}

/// Solution at similarity coordinate `xi = (x - x0)/t`.
pub fn sample(l: &State, r: &State, g: f64, xi: f64) -> State {
    let (ps, us) = star(l, r, g);
    let gm = (g - 1.0) / (g + 1.0);
    if xi <= us {
        let c = sound(l, g);
        if ps > l.p {
            let rho = l.rho * (ps / l.p + gm) / (gm * ps / l.p + 1.0);
            let speed = l.u - c * ((g + 1.0) / (2.0 * g) * ps / l.p + (g - 1.0) / (2.0 * g)).sqrt();
            if xi < speed { *l } else { State { rho, u: us, p: ps } }
        } else {
            let cs = c * (ps / l.p).powf((g - 1.0) / (2.0 * g));
            if xi < l.u - c {
                *l
            } else if xi > us - cs {
                State { rho: l.rho * (ps / l.p).powf(1.0 / g), u: us, p: ps }
            } else {
                let u = 2.0 / (g + 1.0) * (c + 0.5 * (g - 1.0) * l.u + xi);
                let f = 2.0 / (g + 1.0) + gm / c * (l.u - xi);
                State { rho: l.rho * f.powf(2.0 / (g - 1.0)), u, p: l.p * f.powf(2.0 * g / (g - 1.0)) }
            }
        }
    } else {
        let c = sound(r, g);
        if ps > r.p {
            let rho = r.rho * (ps / r.p + gm) / (gm * ps / r.p + 1.0);
            let speed = r.u + c * ((g + 1.0) / (2.0 * g) * ps / r.p + (g - 1.0) / (2.0 * g)).sqrt();
            if xi > speed { *r } else { State { rho, u: us, p: ps } }
        } else {
            let cs = c * (ps / r.p).powf((g - 1.0) / (2.0 * g));
            if xi > r.u + c {
                *r
            } else if xi < us + cs {
                State { rho: r.rho * (ps / r.p).powf(1.0 / g), u: us, p: ps }
            } else {
                let u = 2.0 / (g + 1.0) * (-c + 0.5 * (g - 1.0) * r.u + xi);
                let f = 2.0 / (g + 1.0) - gm / c * (r.u - xi);
                State { rho: r.rho * f.powf(2.0 / (g - 1.0)), u, p: r.p * f.powf(2.0 * g / (g - 1.0)) }
            }
        }
    }
}

/// Cell-averaged exact density over `[a, b]` at time `t` (Gauss–Legendre
/// panels, so the discontinuities cost at most one panel of error).
pub fn mean_density(l: &State, r: &State, g: f64, x0: f64, t: f64, a: f64, b: f64) -> f64 {
    let panels = 16;
    let nodes = [-0.861_136_311_594_052_6, -0.339_981_043_584_856_3, 0.339_981_043_584_856_3, 0.861_136_311_594_052_6];
    let weights = [0.347_854_845_137_453_9, 0.652_145_154_862_546_1, 0.652_145_154_862_546_1, 0.347_854_845_137_453_9];
    let h = (b - a) / panels as f64;
    let mut acc = 0.0;
    for k in 0..panels {
        let mid = a + (k as f64 + 0.5) * h;
        for (x, w) in nodes.iter().zip(weights) {
            acc += w * 0.5 * h * sample(l, r, g, (mid + 0.5 * h * x - x0) / t).rho;
        }
    }
    acc / (b - a)
}

#[allow(dead_code)]
pub const SOD: (State, State) = (State { rho: 1.0, u: 0.0, p: 1.0 }, State { rho: 0.125, u: 0.0, p: 0.1 });
