//! Dawson's integral `D(z) = e^{-z^2} int_0^z e^{u^2} du` and its primitive.

use std::sync::OnceLock;

/// Switch between the Maclaurin series and the asymptotic expansion.
const SWITCH: f64 = 7.0;

/// `D(z)` with relative error below `1e-13`.
pub fn dawson(z: f64) -> f64 {
    if z == 0.0 {
        return 0.0;
    }
    let a = z.abs();
    let d = if a <= SWITCH {
        // e^{-z^2} sum z^{2n+1} / (n! (2n+1)); all terms positive.
        let z2 = a * a;
        let mut term = a;
        let mut sum = a;
        let mut n = 0.0;
        loop {
            n += 1.0;
            term *= z2 / n;
            let t = term / (2.0 * n + 1.0);
            sum += t;
            if t < 1e-17 * sum {
                break;
            }
        }
        (-z2).exp() * sum
    } else {
        // (1/(2z)) sum (2n-1)!! / (2z^2)^n, truncated at the smallest term.
        let x = 1.0 / (2.0 * a * a);
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut n = 0.0;
        loop {
            n += 1.0;
            let next = term * (2.0 * n - 1.0) * x;
            if next >= term || next < 1e-17 * sum {
                break;
            }
            term = next;
            sum += term;
        }
        sum / (2.0 * a)
    };
    d.copysign(z)
}

/// Location and value of `D_m = sup D`, found by golden-section search.
pub fn dawson_argmax() -> (f64, f64) {
    static CELL: OnceLock<(f64, f64)> = OnceLock::new();
    *CELL.get_or_init(|| {
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let (mut a, mut b) = (0.5, 1.5);
        let mut c = b - g * (b - a);
        let mut d = a + g * (b - a);
        let (mut fc, mut fd) = (dawson(c), dawson(d));
        while b - a > 1e-12 {
            if fc > fd {
                b = d;
                d = c;
                fd = fc;
                c = b - g * (b - a);
                fc = dawson(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + g * (b - a);
                fd = dawson(d);
            }
        }
        let z = 0.5 * (a + b);
        (z, dawson(z))
    })
}

pub fn dawson_max() -> f64 {
    dawson_argmax().1
}

// 20-point Gauss-Legendre nodes and weights on [-1, 1] (positive half).
const GL_X: [f64; 10] = [
    0.076_526_521_133_497_34,
    0.227_785_851_141_645_1,
    0.373_706_088_715_419_55,
    0.510_867_001_950_827_1,
    0.636_053_680_726_515,
    0.746_331_906_460_150_8,
    0.839_116_971_822_218_8,
    0.912_234_428_251_325_8,
    0.963_971_927_277_913_8,
    0.993_128_599_185_094_9,
];
const GL_W: [f64; 10] = [
    0.152_753_387_130_725_78,
    0.149_172_986_472_603_66,
    0.142_096_109_318_381_87,
    0.131_688_638_449_176_53,
    0.118_194_531_961_518_25,
    0.101_930_119_817_240_26,
    0.083_276_741_576_704_67,
    0.062_672_048_334_109_44,
    0.040_601_429_800_386_22,
    0.017_614_007_139_153_273,
];

fn gauss(a: f64, b: f64) -> f64 {
    let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
    let mut s = 0.0;
    for (x, w) in GL_X.iter().zip(&GL_W) {
        s += w * (dawson(m + h * x) + dawson(m - h * x));
    }
    s * h
}

fn primitive_near(s: f64) -> f64 {
    let panels = (s.ceil() as usize).max(1);
    let h = s / panels as f64;
    (0..panels).map(|i| gauss(i as f64 * h, (i + 1) as f64 * h)).sum()
}

/// Termwise primitive of the asymptotic expansion of `D`.
fn primitive_tail(y: f64) -> f64 {
    let x = 1.0 / (y * y);
    let mut s = 0.5 * y.ln();
    // c_n = (2n-1)!! / 2^{n+1}; term = c_n / (2n y^{2n})
    let mut c = 0.5;
    let mut p = 1.0;
    let mut prev = f64::INFINITY;
    for n in 1..200 {
        let nf = n as f64;
        c *= (2.0 * nf - 1.0) / 2.0;
        p *= x;
        let t = c * p / (2.0 * nf);
        if t >= prev || t < 1e-18 {
            break;
        }
        s -= t;
        prev = t;
    }
    s
}

/// `int_0^s D(u) du`, an even function of `s`.
pub fn dawson_primitive(s: f64) -> f64 {
    static AT_SWITCH: OnceLock<f64> = OnceLock::new();
    let a = s.abs();
    if a <= SWITCH {
        primitive_near(a)
    } else {
        let base = *AT_SWITCH.get_or_init(|| primitive_near(SWITCH) - primitive_tail(SWITCH));
        base + primitive_tail(a)
    }
}

/// `F(s) = -(1/(2 D_m^2)) int_0^s D` with its first two derivatives.
pub fn frak_f(s: f64) -> (f64, f64, f64) {
    let dm = dawson_max();
    let k = -1.0 / (2.0 * dm * dm);
    let d = dawson(s);
    (k * dawson_primitive(s), k * d, k * (1.0 - 2.0 * s * d))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values() {
        assert_eq!(dawson(0.0), 0.0);
        assert!((dawson(1.0) - 0.538_079_506_9).abs() < 1e-9);
        assert!((dawson(-1.0) + 0.538_079_506_9).abs() < 1e-9);
        let (z, m) = dawson_argmax();
        assert!((z - 0.9241).abs() < 1e-3);
        assert!((m - 0.541_044_224_6).abs() < 1e-9);
    }

    #[test]
    fn branches_agree_at_switch() {
        let a = dawson(SWITCH);
        let b = dawson(SWITCH + 1e-12);
        assert!((a - b).abs() < 1e-12 * a);
        let p = primitive_near(SWITCH + 0.5);
        assert!((p - dawson_primitive(SWITCH + 0.5)).abs() < 1e-10);
    }

    #[test]
    fn quadrature_rule_is_exact_for_polynomials() {
        let w: f64 = GL_W.iter().sum();
        assert!((w - 1.0).abs() < 1e-15);
        let m: f64 = GL_X.iter().zip(&GL_W).map(|(x, w)| 2.0 * w * x.powi(38)).sum();
        assert!((m - 2.0 / 39.0).abs() < 1e-14);
    }

    #[test]
    fn frak_f_derivative() {
        for &s in &[0.3, 2.0, 6.9, 7.5, 20.0] {
            let h = 1e-5;
            let fd = (frak_f(s + h).0 - frak_f(s - h).0) / (2.0 * h);
            assert!((fd - frak_f(s).1).abs() < 1e-8, "s = {s}");
        }
    }
}
