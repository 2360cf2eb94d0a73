use std::ops::Range;

use crate::error::{Error, Result};
use crate::exact::scatter_lag_sums;
use crate::lowrank::factors::LowRankFactors;
use crate::rope::{build_tilde_a_block, Instance};
use crate::spectral::{next_pow2, FftPlan};
use crate::tensor::{Matrix, Vector};

const COLUMN_CHUNK: usize = 16;

/// `Ã^T vec(U V^T)` without forming anything `n x n`.
///
/// For each rank column `l`, the lag sums `T_t[a, c]` receive the cross-correlation of
/// `U[:, l] ∘ A1[:, a]` with `V[:, l] ∘ A2[:, c]`. Spectra are accumulated over `l`, so only
/// `d^2` inverse transforms are needed at the end.
pub fn fast_contract(inst: &Instance, f: &LowRankFactors) -> Result<Vector> {
    fast_contract_threaded(inst, f, 1)
}

/// [`fast_contract`] with the rank columns split over `threads` workers. Partial spectra are
/// summed in worker order, so the result depends only on the thread count.
pub fn fast_contract_threaded(
    inst: &Instance,
    f: &LowRankFactors,
    threads: usize,
) -> Result<Vector> {
    let (n, d) = (inst.n(), inst.d());
    if f.n() != n {
        return Err(Error::shape("fast_contract", f.u.shape(), (n, f.rank())));
    }
    let k = f.rank();
    let plan = FftPlan::new(next_pow2(2 * n))?;
    let len = plan.len();
    let half = len / 2 + 1;
    let dd = d * d;
    let workers = threads.clamp(1, k.max(1));
    let (acc_re, acc_im) = if workers == 1 {
        accumulate(inst, f, &plan, 0..k)
    } else {
        let per = k.div_ceil(workers);
        let parts: Vec<(Vec<f64>, Vec<f64>)> = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    let range = (w * per).min(k)..((w + 1) * per).min(k);
                    let plan = &plan;
                    scope.spawn(move || accumulate(inst, f, plan, range))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("worker panicked"))
                .collect()
        });
        let mut iter = parts.into_iter();
        let (mut re, mut im) = iter.next().expect("at least one worker");
        for (r, i) in iter {
            re.iter_mut().zip(&r).for_each(|(a, b)| *a += b);
            im.iter_mut().zip(&i).for_each(|(a, b)| *a += b);
        }
        (re, im)
    };

    let mut lag_sums = vec![0.0; (2 * n - 1) * dd];
    for p in 0..dd {
        let off = p * half;
        let circ = plan.inverse_half_spectrum(&acc_re[off..off + half], &acc_im[off..off + half]);
        for idx in 0..2 * n - 1 {
            let t = idx as isize - (n as isize - 1);
            lag_sums[idx * dd + p] = circ[t.rem_euclid(len as isize) as usize];
        }
    }
    Ok(scatter_lag_sums(inst, &lag_sums))
}

/// Sums `X_a conj(Y_c)` over the rank columns in `cols`, for bins `0..=len/2`.
fn accumulate(
    inst: &Instance,
    f: &LowRankFactors,
    plan: &FftPlan,
    cols: Range<usize>,
) -> (Vec<f64>, Vec<f64>) {
    let (n, d) = (inst.n(), inst.d());
    let half = plan.len() / 2 + 1;
    let dd = d * d;
    let (mut acc_re, mut acc_im) = (vec![0.0; dd * half], vec![0.0; dd * half]);
    let mut xs = vec![vec![0.0; n]; d];
    let mut ys = vec![vec![0.0; n]; d];
    let mut spec = vec![vec![0.0; half]; 4 * d];
    let mut scratch = (
        Vec::with_capacity(plan.len()),
        Vec::with_capacity(plan.len()),
    );
    let mut ucols = vec![vec![0.0; n]; COLUMN_CHUNK];
    let mut vcols = vec![vec![0.0; n]; COLUMN_CHUNK];
    let (a1, a2) = (inst.a1(), inst.a2());

    for start in cols.clone().step_by(COLUMN_CHUNK) {
        let width = COLUMN_CHUNK.min(cols.end - start);
        gather(&f.u, start, width, &mut ucols);
        gather(&f.v, start, width, &mut vcols);
        for l in 0..width {
            for i in 0..n {
                let (u, v) = (ucols[l][i], vcols[l][i]);
                for (a, (&x, &y)) in a1.row(i).iter().zip(a2.row(i)).enumerate() {
                    xs[a][i] = u * x;
                    ys[a][i] = v * y;
                }
            }
            for a in 0..d {
                let [xr, xi, yr, yi] = spec_slots(&mut spec, a);
                plan.real_pair_half_spectra(&xs[a], &ys[a], &mut scratch, [xr, xi, yr, yi]);
            }
            for a in 0..d {
                for c in 0..d {
                    let (xr, xi) = (&spec[4 * a], &spec[4 * a + 1]);
                    let (yr, yi) = (&spec[4 * c + 2], &spec[4 * c + 3]);
                    let off = (a * d + c) * half;
                    let (ar, ai) = (&mut acc_re[off..off + half], &mut acc_im[off..off + half]);
                    for kk in 0..half {
                        // X conj(Y)
                        ar[kk] += xr[kk] * yr[kk] + xi[kk] * yi[kk];
                        ai[kk] += xi[kk] * yr[kk] - xr[kk] * yi[kk];
                    }
                }
            }
        }
    }
    (acc_re, acc_im)
}

fn spec_slots(spec: &mut [Vec<f64>], a: usize) -> [&mut [f64]; 4] {
    let [xr, xi, yr, yi] = &mut spec[4 * a..4 * a + 4] else {
        unreachable!("four spectra per coordinate")
    };
    [
        xr.as_mut_slice(),
        xi.as_mut_slice(),
        yr.as_mut_slice(),
        yi.as_mut_slice(),
    ]
}

fn gather(m: &Matrix, start: usize, width: usize, out: &mut [Vec<f64>]) {
    for i in 0..m.rows() {
        let row = &m.row(i)[start..start + width];
        for (col, &v) in out.iter_mut().zip(row) {
            col[i] = v;
        }
    }
}

/// `Ã^T vec(Γ)` evaluated literally, one materialized block `Ã_{j0}` at a time.
pub fn naive_contract(inst: &Instance, gamma: &Matrix) -> Result<Vector> {
    let n = inst.n();
    if gamma.shape() != (n, n) {
        return Err(Error::shape("naive_contract", gamma.shape(), (n, n)));
    }
    let mut g = vec![0.0; inst.d().pow(4)];
    for j0 in 0..n {
        let block = build_tilde_a_block(inst, j0)?;
        for i in 0..n {
            let w = gamma[(j0, i)];
            for (o, &b) in g.iter_mut().zip(block.row(i)) {
                *o += w * b;
            }
        }
    }
    Vector::new(g)
}
