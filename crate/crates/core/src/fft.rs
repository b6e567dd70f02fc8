//! Separable n-dimensional FFTs on row-major buffers.

use std::cell::RefCell;

use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Unnormalized in-place DFT over every axis of a `samples^dim` row-major cube.
pub(crate) fn fft_nd(data: &mut [Complex64], samples: usize, dim: usize, direction: FftDirection) {
    debug_assert_eq!(data.len(), samples.pow(dim as u32));
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft(samples, direction));
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    // Last axis is contiguous.
    fft.process_with_scratch(data, &mut scratch);
    if dim == 1 {
        return;
    }
    let mut line = vec![Complex64::default(); samples];
    for axis in 0..dim - 1 {
        let stride = samples.pow((dim - 1 - axis) as u32);
        let block = stride * samples;
        for base in (0..data.len()).step_by(block) {
            for offset in 0..stride {
                let start = base + offset;
                for (i, slot) in line.iter_mut().enumerate() {
                    *slot = data[start + i * stride];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (i, v) in line.iter().enumerate() {
                    data[start + i * stride] = *v;
                }
            }
        }
    }
}
