//! Multi-dimensional complex FFTs over lexicographically stored cubes.
//!
//! Plans are cached per thread and per axis length. The inverse transform is
//! normalized so that `inverse(forward(x)) == x`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};

struct Plans {
    planner: FftPlanner<f64>,
    forward: HashMap<usize, Arc<dyn Fft<f64>>>,
    inverse: HashMap<usize, Arc<dyn Fft<f64>>>,
}

thread_local! {
    static PLANS: RefCell<Plans> = RefCell::new(Plans {
        planner: FftPlanner::new(),
        forward: HashMap::new(),
        inverse: HashMap::new(),
    });
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANS.with(|p| {
        let mut p = p.borrow_mut();
        let Plans {
            planner,
            forward,
            inverse: inv,
        } = &mut *p;
        if inverse {
            inv.entry(len)
                .or_insert_with(|| planner.plan_fft_inverse(len))
                .clone()
        } else {
            forward
                .entry(len)
                .or_insert_with(|| planner.plan_fft_forward(len))
                .clone()
        }
    })
}

fn transform(values: &mut [C64], dim: usize, n: usize, inverse: bool) {
    assert_eq!(values.len(), n.pow(dim as u32), "array is not an n^dim cube");
    let fft = plan(n, inverse);
    let mut scratch = vec![C64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut line = vec![C64::new(0.0, 0.0); n];
    let total = values.len();
    for axis in 0..dim {
        let stride = n.pow((dim - 1 - axis) as u32);
        if stride == 1 {
            for chunk in values.chunks_exact_mut(n) {
                fft.process_with_scratch(chunk, &mut scratch);
            }
            continue;
        }
        let block = stride * n;
        for start in (0..total).step_by(block) {
            for offset in 0..stride {
                let base = start + offset;
                for (k, l) in line.iter_mut().enumerate() {
                    *l = values[base + k * stride];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (k, l) in line.iter().enumerate() {
                    values[base + k * stride] = *l;
                }
            }
        }
    }
    if inverse {
        let scale = 1.0 / total as f64;
        for v in values.iter_mut() {
            *v *= scale;
        }
    }
}

/// Unnormalized forward DFT along every axis.
pub fn forward(values: &mut [C64], dim: usize, n: usize) {
    transform(values, dim, n, false);
}

/// Normalized inverse DFT along every axis.
pub fn inverse(values: &mut [C64], dim: usize, n: usize) {
    transform(values, dim, n, true);
}
