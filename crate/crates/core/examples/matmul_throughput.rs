// quick matmul throughput probe
use fame_core::{RngState, Tensor};
use std::time::Instant;

fn rnd(r: usize, c: usize, rng: &mut RngState) -> Tensor {
    Tensor::new(vec![r, c], (0..r * c).map(|_| rng.next_gaussian()).collect()).unwrap()
}

fn bench(name: &str, flops: f64, f: impl Fn()) {
    f();
    let reps = 30;
    let t = Instant::now();
    for _ in 0..reps { f(); }
    let dt = t.elapsed().as_secs_f64() / reps as f64;
    println!("{name}: {:.3} ms, {:.2} GFLOP/s", dt * 1e3, flops / dt / 1e9);
}

fn main() {
    let mut rng = RngState::new(0);
    let h = rnd(250, 784, &mut rng);
    let w = rnd(256, 784, &mut rng);
    let wt = w.transposed().unwrap();
    let delta = rnd(250, 256, &mut rng);
    let wv = rnd(256, 784, &mut rng);
    let flops = 2.0 * 250.0 * 784.0 * 256.0;

    bench("nn kernel 250x784 . 784x256", flops, || { h.matmul(&wt).unwrap(); });
    bench("nt fwd (incl transpose)", flops, || { h.matmul_nt(&w).unwrap(); });
    bench("tn dW (250x256)^T . 250x784", flops, || { delta.matmul_tn(&h).unwrap(); });
    bench("nn dH 250x256 . 256x784", flops, || { delta.matmul(&wv).unwrap(); });
}
