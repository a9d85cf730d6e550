//! Throughput of the dominant convolution shapes.

use std::time::Instant;

use pcl_autodiff::{Shape, Tape, Tensor};

fn bench(n: usize, cin: usize, cout: usize, hw: usize, reps: usize, train: bool) {
    let x = Tensor::<f32>::from_fn(Shape::new(n, cin, hw, hw), |_, c, y, x| {
        ((c + y + x) as f32 * 0.1).sin()
    });
    let w = Tensor::<f32>::from_fn(Shape::new(cout, cin, 3, 3), |o, c, y, x| {
        ((o + c + y + x) as f32 * 0.05).cos() * 0.1
    });
    let t0 = Instant::now();
    for _ in 0..reps {
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone(), train);
        let wv = tape.leaf(w.clone(), train);
        let y = tape.conv2d(xv, wv, None, 1, 1, 1).unwrap();
        if train {
            let loss = tape.mean_all(y);
            let _ = tape.backward(loss).unwrap();
        } else {
            std::hint::black_box(tape.value(y).data()[0]);
        }
    }
    let dt = t0.elapsed().as_secs_f64() / reps as f64;
    let macs = (n * cout * hw * hw * cin * 9) as f64;
    let flops = if train { macs * 6.0 } else { macs * 2.0 };
    println!(
        "n{n} {cin}->{cout} @{hw}x{hw} train={train}: {:.4}s  {:.2} GFLOP/s",
        dt,
        flops / dt / 1e9
    );
}

fn main() {
    for train in [false, true] {
        bench(4, 34, 96, 32, 10, train);
        bench(4, 96, 64, 32, 10, train);
        bench(4, 98, 96, 16, 10, train);
        bench(4, 16, 16, 16, 50, train);
    }
}
