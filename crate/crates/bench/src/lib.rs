//! Fixtures shared by the benchmarks.

use braket_core::{Color, Configuration};

/// `n` agents over `k` colors, striped `0, 1, …, k-1, 0, …` with the last
/// agent forced to color 0, so color 0 is the unique plurality.
pub fn striped(n: usize, k: u32) -> Configuration {
    let mut colors: Vec<Color> = (0..n).map(|i| Color((i % k as usize) as u32)).collect();
    if let Some(last) = colors.last_mut() {
        *last = Color(0);
    }
    Configuration::new(&colors, k).expect("valid fixture")
}
