use super::tables::{EXP2_NEG_Q32, LN2_Q32, LN_1P_Q32, LOG2E_Q32};
use super::{FixedScalar, FixedTensor, NumericError, FRAC_BITS, ONE_RAW};

const LN_INTERP_BITS: u32 = 25;
const EXP_INTERP_BITS: u32 = 26;

/// Natural logarithm of a positive Q16.16 value.
///
/// The argument is split as `m * 2^e` with `m` in `[1, 2)`; `ln m` comes from a
/// 64-segment linear interpolation table. Absolute error stays below `2^-14`
/// across the whole positive range.
pub fn fx_ln(p: FixedScalar) -> Result<FixedScalar, NumericError> {
    let raw = p.raw();
    if raw <= 0 {
        return Err(NumericError::Domain(format!("ln of non-positive value {p}")));
    }
    let raw = raw as u32;
    let exp = 31 - raw.leading_zeros() as i64;
    // mantissa - 1 with 31 fractional bits
    let frac = ((raw as u64) << (31 - exp)) - (1u64 << 31);
    let j = (frac >> LN_INTERP_BITS) as usize;
    let t = (frac & ((1 << LN_INTERP_BITS) - 1)) as i64;
    let lo = LN_1P_Q32[j];
    let hi = LN_1P_Q32[j + 1];
    let mantissa_ln = lo + (((hi - lo) * t) >> LN_INTERP_BITS);
    let q32 = (exp - FRAC_BITS as i64) * LN2_Q32 + mantissa_ln;
    FixedScalar::from_wide(q32 >> FRAC_BITS)
}

/// `2^-w` for non-negative `w` with 32 fractional bits; result has 32 fractional bits.
fn exp2_neg_q32(w: u128) -> u64 {
    let whole = w >> 32;
    if whole > 32 {
        return 0;
    }
    let f = (w & 0xFFFF_FFFF) as u64;
    let j = (f >> EXP_INTERP_BITS) as usize;
    let t = f & ((1 << EXP_INTERP_BITS) - 1);
    let lo = EXP2_NEG_Q32[j];
    let hi = EXP2_NEG_Q32[j + 1];
    let v = lo - (((lo - hi) * t) >> EXP_INTERP_BITS);
    v >> whole
}

/// Fixed-point softmax over a 1-D tensor of logits.
///
/// Exponentials are evaluated relative to the maximum logit with a table-driven
/// `2^-x`. Probabilities are floored to Q16.16 and the lost units are handed out
/// by largest remainder (ties to the lower index), so the output sums to exactly 1.
pub fn fx_softmax(logits: &FixedTensor) -> Result<FixedTensor, NumericError> {
    if logits.shape().len() != 1 {
        return Err(NumericError::ShapeMismatch {
            expected: vec![logits.len()],
            found: logits.shape().to_vec(),
        });
    }
    let values = logits.data();
    let max = values.iter().map(|v| v.raw()).max().ok_or(NumericError::Empty)?;
    let exps: Vec<u64> = values
        .iter()
        .map(|v| {
            let below = (max as i64 - v.raw() as i64) as u128;
            exp2_neg_q32((below * LOG2E_Q32 as u128) >> FRAC_BITS)
        })
        .collect();
    let total: u128 = exps.iter().map(|&e| e as u128).sum();
    let mut probs = Vec::with_capacity(exps.len());
    let mut remainders = Vec::with_capacity(exps.len());
    for &e in &exps {
        let scaled = (e as u128) << FRAC_BITS;
        probs.push((scaled / total) as i32);
        remainders.push(scaled % total);
    }
    let assigned: i64 = probs.iter().map(|&p| p as i64).sum();
    let deficit = (ONE_RAW as i64 - assigned) as usize;
    if deficit > 0 {
        let mut order: Vec<usize> = (0..probs.len()).collect();
        order.sort_by(|&a, &b| remainders[b].cmp(&remainders[a]).then(a.cmp(&b)));
        for &i in order.iter().take(deficit) {
            probs[i] += 1;
        }
    }
    Ok(FixedTensor::vector(
        probs.into_iter().map(FixedScalar::from_raw).collect(),
    ))
}
