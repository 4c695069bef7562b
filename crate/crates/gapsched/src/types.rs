//! Shared scalar types: integer tick time base and exact rationals.

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};

/// One abstract time unit. All schedule arithmetic stays on this integer grid.
pub type Tick = u64;

/// Exact non-negative rational, used for rewards, bandwidths and data volumes.
pub type Rat = Ratio<u64>;

/// Widen a [`Rat`] for overflow-free intermediate arithmetic (ranks, means).
pub fn big(r: Rat) -> BigRational {
    BigRational::new(BigInt::from(*r.numer()), BigInt::from(*r.denom()))
}

/// `ceil(r)` as a tick count.
pub fn ceil_ticks(r: Rat) -> Tick {
    r.ceil().to_integer()
}

/// Narrow a big rational back to `Rat`. Panics if the reduced value does not
/// fit in u64; inputs in this crate stay far below that.
pub fn narrow(r: &BigRational) -> Rat {
    use num_traits::ToPrimitive;
    let n = r.numer().to_u64().expect("rational numerator exceeds u64");
    let d = r.denom().to_u64().expect("rational denominator exceeds u64");
    Rat::new(n, d)
}

/// splitmix64 finalizer; used to derive independent sub-seeds from one base
/// seed so adding a parameter never perturbs unrelated random draws.
pub fn mix_seed(base: u64, tag: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(tag.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(index.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
