//! Splittable streams: reproducible, and split children are uncorrelated.

use bffg::RandomStream;

fn main() {
    let mut a = RandomStream::new(7);
    let mut b = RandomStream::new(7);
    assert_eq!(a.next_raw(), b.next_raw());

    let (mut left, mut right) = RandomStream::new(7).split();
    let n = 100_000;
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for _ in 0..n {
        let (x, y) = (left.next_uniform(), right.next_uniform());
        sx += x;
        sy += y;
        sxx += x * x;
        syy += y * y;
        sxy += x * y;
    }
    let n = n as f64;
    let cov = sxy / n - sx * sy / n / n;
    let rho = cov / ((sxx / n - (sx / n).powi(2)) * (syy / n - (sy / n).powi(2))).sqrt();
    println!("correlation of split children: {rho:+.5}");

    let again = RandomStream::from_path(7, &[true]);
    println!(
        "right child recovered from path: {}",
        again.clone().next_uniform() == RandomStream::new(7).split().1.next_uniform()
    );
    println!(
        "replicate 0 and 1 differ: {}",
        RandomStream::for_replicate(7, 0) != RandomStream::for_replicate(7, 1)
    );
}
