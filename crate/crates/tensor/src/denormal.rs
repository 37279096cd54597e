//! Flush-to-zero mode for the calling thread.
//!
//! Subnormal operands take a microcode slow path on most CPUs, which can make
//! a gemm several times slower once gradients shrink below ~1e-38. With the
//! guard active, subnormal inputs read as zero and subnormal results are
//! written as zero. Results stay deterministic for a given mode.

/// Restores the previous floating-point control state on drop.
#[derive(Debug)]
pub struct FlushDenormals {
    #[allow(dead_code)]
    saved: Option<u64>,
}

impl FlushDenormals {
    /// Enables flush-to-zero when `on` and the target supports it.
    pub fn enable(on: bool) -> Self {
        Self {
            saved: if on { imp::enable() } else { None },
        }
    }

    /// Whether flushing is actually in effect.
    pub fn active(&self) -> bool {
        self.saved.is_some()
    }
}

impl Drop for FlushDenormals {
    fn drop(&mut self) {
        if let Some(s) = self.saved {
            imp::restore(s);
        }
    }
}

#[cfg(target_arch = "x86_64")]
mod imp {
    use std::arch::asm;

    // MXCSR bits: flush-to-zero (15) and denormals-are-zero (6).
    const FTZ_DAZ: u32 = (1 << 15) | (1 << 6);

    fn get() -> u32 {
        let mut v: u32 = 0;
        unsafe { asm!("stmxcsr [{}]", in(reg) &mut v, options(nostack)) };
        v
    }

    fn set(v: u32) {
        unsafe { asm!("ldmxcsr [{}]", in(reg) &v, options(nostack, readonly)) };
    }

    pub fn enable() -> Option<u64> {
        let old = get();
        set(old | FTZ_DAZ);
        Some(u64::from(old))
    }

    pub fn restore(saved: u64) {
        set(saved as u32);
    }
}

#[cfg(target_arch = "aarch64")]
mod imp {
    use std::arch::asm;

    // FPCR.FZ
    const FZ: u64 = 1 << 24;

    fn get() -> u64 {
        let v: u64;
        unsafe { asm!("mrs {}, fpcr", out(reg) v, options(nomem, nostack)) };
        v
    }

    fn set(v: u64) {
        unsafe { asm!("msr fpcr, {}", in(reg) v, options(nomem, nostack)) };
    }

    pub fn enable() -> Option<u64> {
        let old = get();
        set(old | FZ);
        Some(old)
    }

    pub fn restore(saved: u64) {
        set(saved);
    }
}

#[cfg(not(any(target_arch = "x86_64", target_arch = "aarch64")))]
mod imp {
    pub fn enable() -> Option<u64> {
        None
    }

    pub fn restore(_: u64) {}
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flushes_inside_the_guard_and_restores_after() {
        let tiny = std::hint::black_box(f32::MIN_POSITIVE);
        let half = std::hint::black_box(0.5f32);
        assert!((tiny * half).is_subnormal());
        {
            let g = FlushDenormals::enable(true);
            if g.active() {
                assert_eq!(std::hint::black_box(tiny * half), 0.0);
            }
        }
        assert!((tiny * half).is_subnormal());
    }

    #[test]
    fn disabled_guard_changes_nothing() {
        let g = FlushDenormals::enable(false);
        assert!(!g.active());
        let tiny = std::hint::black_box(f64::MIN_POSITIVE);
        assert!((tiny * std::hint::black_box(0.5)).is_subnormal());
    }
}
