//! Millisecond wall clock. Without `std` there is no time source and every
//! reading is zero.

#[cfg(feature = "std")]
pub fn now_ms() -> f64 {
    use std::sync::OnceLock;
    use std::time::Instant;
    static START: OnceLock<Instant> = OnceLock::new();
    START.get_or_init(Instant::now).elapsed().as_secs_f64() * 1e3
}

#[cfg(not(feature = "std"))]
pub fn now_ms() -> f64 {
    0.0
}

#[cfg(test)]
mod tests {
    #[test]
    fn clock_is_monotone() {
        let a = super::now_ms();
        let b = super::now_ms();
        assert!(b >= a);
    }
}
