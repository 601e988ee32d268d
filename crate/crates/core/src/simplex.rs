//! Box-constrained downhill simplex (Nelder–Mead).
//!
//! Out-of-box proposals are clamped onto the box. The search stops when the
//! spread of objective values across the simplex falls below `spread_tol` or
//! the evaluation budget is exhausted.

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexOptions {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
    pub spread_tol: f64,
    pub max_evals: usize,
}

impl SimplexOptions {
    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Self {
            lower,
            upper,
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
            spread_tol: 1e-4,
            max_evals: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexResult {
    /// Best point evaluated over the whole search.
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub converged: bool,
}

fn clamp(x: &mut [f64], opts: &SimplexOptions) {
    for (k, v) in x.iter_mut().enumerate() {
        *v = v.clamp(opts.lower[k], opts.upper[k]);
    }
}

fn affine(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    // a + t (b - a)
    a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
}

pub fn minimize<F>(mut f: F, initial: &[Vec<f64>], opts: &SimplexOptions) -> SimplexResult
where
    F: FnMut(&[f64]) -> f64,
{
    let dim = initial[0].len();
    assert_eq!(initial.len(), dim + 1, "simplex needs dim + 1 vertices");

    let mut evals = 0usize;
    let mut best: (Vec<f64>, f64) = (initial[0].clone(), f64::INFINITY);
    let mut eval = |x: &[f64], evals: &mut usize, best: &mut (Vec<f64>, f64)| {
        *evals += 1;
        let v = f(x);
        let v = if v.is_nan() { f64::INFINITY } else { v };
        if v < best.1 || (best.1.is_infinite() && *evals == 1) {
            *best = (x.to_vec(), v);
        }
        v
    };

    let mut pts: Vec<Vec<f64>> = initial
        .iter()
        .map(|p| {
            let mut p = p.clone();
            clamp(&mut p, opts);
            p
        })
        .collect();
    let mut vals: Vec<f64> = pts.iter().map(|p| eval(p, &mut evals, &mut best)).collect();
    let mut converged = false;

    loop {
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]).then(a.cmp(&b)));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();

        let (fb, fw) = (vals[0], vals[dim]);
        if fb.is_finite() && fw - fb < opts.spread_tol {
            converged = true;
            break;
        }
        if evals >= opts.max_evals {
            break;
        }

        let centroid: Vec<f64> = (0..dim)
            .map(|k| pts[..dim].iter().map(|p| p[k]).sum::<f64>() / dim as f64)
            .collect();
        let worst = pts[dim].clone();

        let mut xr = affine(&centroid, &worst, -opts.reflection);
        clamp(&mut xr, opts);
        let fr = eval(&xr, &mut evals, &mut best);

        if fr < vals[0] {
            let mut xe = affine(&centroid, &xr, opts.expansion);
            clamp(&mut xe, opts);
            let fe = eval(&xe, &mut evals, &mut best);
            if fe < fr {
                pts[dim] = xe;
                vals[dim] = fe;
            } else {
                pts[dim] = xr;
                vals[dim] = fr;
            }
            continue;
        }
        if fr < vals[dim - 1] {
            pts[dim] = xr;
            vals[dim] = fr;
            continue;
        }

        let (xc, accept) = if fr < vals[dim] {
            let mut xc = affine(&centroid, &xr, opts.contraction);
            clamp(&mut xc, opts);
            let fc = eval(&xc, &mut evals, &mut best);
            let ok = fc <= fr;
            ((xc, fc), ok)
        } else {
            let mut xc = affine(&centroid, &worst, opts.contraction);
            clamp(&mut xc, opts);
            let fc = eval(&xc, &mut evals, &mut best);
            let ok = fc < vals[dim];
            ((xc, fc), ok)
        };
        if accept {
            pts[dim] = xc.0;
            vals[dim] = xc.1;
            continue;
        }

        // shrink towards the best vertex
        for i in 1..=dim {
            if evals >= opts.max_evals {
                break;
            }
            let mut p = affine(&pts[0], &pts[i], opts.shrink);
            clamp(&mut p, opts);
            vals[i] = eval(&p, &mut evals, &mut best);
            pts[i] = p;
        }
    }

    SimplexResult {
        x: best.0,
        f: best.1,
        evals,
        converged,
    }
}
