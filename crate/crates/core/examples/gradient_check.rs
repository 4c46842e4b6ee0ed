//! Compare a conv layer's analytic gradients with central differences.
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use spoken_digits::nn::{conv2d_backward, conv2d_forward, Conv2d, Tensor};

fn main() -> spoken_digits::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut normal = |shape: &[usize]| {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| StandardNormal.sample(&mut rng)).collect())
    };
    let x = normal(&[2, 5, 5, 2])?;
    let w = normal(&[2, 5, 5, 3])?;
    let layer = Conv2d {
        kernels: normal(&[3, 2, 3, 3])?,
        bias: normal(&[3])?,
        l2_factor: 0.0,
    };
    let loss = |x: &Tensor| -> f64 {
        let y = conv2d_forward(x, &layer).unwrap();
        y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
    };
    let analytic = conv2d_backward(&w, &x, &layer)?.input;
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = loss(&probe);
        probe.data_mut()[i] = orig - h;
        let down = loss(&probe);
        probe.data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let a = analytic.data()[i];
        worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-3));
    }
    println!("conv2d input gradient: {} entries, max relative error {worst:.2e}", x.len());
    Ok(())
}
