//! Partial and complete exponential Bell polynomials and the logarithmic
//! (partition) polynomials, evaluated from cached partition tables with exact
//! integer coefficients.
//!
//! `B_{k,j}(x_1, ..., x_{k-j+1})` sums `k! / (lambda_1! ... lambda_m!) *
//! prod_i (x_i / i!)^{lambda_i}` over all nonnegative integer sequences
//! `lambda` with `sum_i i lambda_i = k` and `sum_i lambda_i = j`. The
//! cumulant engine evaluates these repeatedly for `k` up to ~60, so the
//! enumeration for each `(k, j)` happens once and is cached.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use rug::{Float, Integer};
use thiserror::Error;

use crate::precision::Real;

/// Errors from polynomial evaluation.
#[derive(Debug, Error)]
pub enum BellError {
    /// The variable vector has fewer entries than the formula reads.
    #[error("variable vector too short: need at least {needed} entries, got {got}")]
    IndexError { needed: usize, got: usize },
}

/// One monomial of a partial Bell polynomial: exact coefficient and the
/// multiset of variable indices (1-based) with multiplicities.
struct PartitionTerm {
    coeff: Integer,
    factors: Vec<(u16, u16)>,
}

struct PartitionTable {
    terms: Vec<PartitionTerm>,
}

type TableCache = HashMap<(u32, u32), Arc<PartitionTable>>;

static TABLES: RwLock<Option<TableCache>> = RwLock::new(None);

fn partition_table(k: u32, j: u32) -> Arc<PartitionTable> {
    {
        let guard = TABLES.read().unwrap();
        if let Some(map) = guard.as_ref() {
            if let Some(t) = map.get(&(k, j)) {
                return Arc::clone(t);
            }
        }
    }
    let built = Arc::new(build_table(k, j));
    let mut guard = TABLES.write().unwrap();
    let map = guard.get_or_insert_with(HashMap::new);
    Arc::clone(map.entry((k, j)).or_insert(built))
}

/// Enumerates all `lambda` sequences for `(k, j)` and precomputes the exact
/// coefficient `k! / (prod lambda_i! * prod (i!)^(lambda_i))` of each.
fn build_table(k: u32, j: u32) -> PartitionTable {
    let mut terms = Vec::new();
    let width = (k - j + 1) as usize;
    let mut lambda = vec![0u16; width];
    // choose multiplicities from the largest part down
    fn recurse(
        i: usize,
        remaining_sum: u32,
        remaining_count: u32,
        lambda: &mut [u16],
        out: &mut Vec<PartitionTerm>,
        k: u32,
    ) {
        if i == 0 {
            if remaining_sum == 0 && remaining_count == 0 {
                out.push(make_term(lambda, k));
            }
            return;
        }
        if remaining_sum > remaining_count * i as u32 {
            return; // even all-i parts cannot reach the target
        }
        let max_mult = (remaining_sum / i as u32).min(remaining_count);
        for m in 0..=max_mult {
            lambda[i - 1] = m as u16;
            recurse(i - 1, remaining_sum - m * i as u32, remaining_count - m, lambda, out, k);
        }
        lambda[i - 1] = 0;
    }
    recurse(width, k, j, &mut lambda, &mut terms, k);
    PartitionTable { terms }
}

fn make_term(lambda: &[u16], k: u32) -> PartitionTerm {
    let mut denom = Integer::from(1);
    let mut factors = Vec::new();
    for (idx, &mult) in lambda.iter().enumerate() {
        if mult == 0 {
            continue;
        }
        let i = (idx + 1) as u32;
        denom *= Integer::from(Integer::factorial(mult as u32));
        let i_fact = Integer::from(Integer::factorial(i));
        for _ in 0..mult {
            denom *= &i_fact;
        }
        factors.push((i as u16, mult));
    }
    let mut coeff = Integer::from(Integer::factorial(k));
    debug_assert!(coeff.is_divisible(&denom));
    coeff /= denom;
    PartitionTerm { coeff, factors }
}

fn check_len(x: &[Real], needed: usize) -> Result<(), BellError> {
    if x.len() < needed {
        Err(BellError::IndexError { needed, got: x.len() })
    } else {
        Ok(())
    }
}

/// Partial exponential Bell polynomial `B_{k,j}(x_1, ..., x_{k-j+1})`.
///
/// `x` is the variable vector `x_1, x_2, ...` (slice index 0 holds `x_1`).
/// Requires `1 <= j <= k` and at least `k - j + 1` entries.
pub fn partial_bell(k: u32, j: u32, x: &[Real]) -> Result<Real, BellError> {
    assert!(j >= 1 && j <= k, "partial_bell requires 1 <= j <= k");
    check_len(x, (k - j + 1) as usize)?;
    let prec = x[0].prec();
    let table = partition_table(k, j);
    let mut sum = Float::with_val(prec, 0);
    for term in &table.terms {
        let mut prod = Float::with_val(prec, &term.coeff);
        for &(i, mult) in &term.factors {
            let xi = &x[(i - 1) as usize];
            for _ in 0..mult {
                prod *= xi;
            }
        }
        sum += prod;
    }
    Ok(sum)
}

/// Complete Bell polynomial `Y_k = sum_{j=1}^k B_{k,j}`, with `Y_0 = 1`.
pub fn complete_bell(k: u32, x: &[Real]) -> Result<Real, BellError> {
    if k == 0 {
        let prec = x.first().map_or(53, |v| v.prec());
        return Ok(Float::with_val(prec, 1));
    }
    check_len(x, k as usize)?;
    let prec = x[0].prec();
    let mut sum = Float::with_val(prec, 0);
    for j in 1..=k {
        sum += partial_bell(k, j, x)?;
    }
    Ok(sum)
}

/// Double-precision [`log_partition_poly`], for the order-selection pass that
/// mirrors an all-double pipeline. Overflow is the caller's signal that the
/// order is out of reach at this precision.
pub(crate) fn log_partition_poly_f64(k: u32, x: &[f64]) -> f64 {
    debug_assert!(k >= 1 && x.len() >= k as usize);
    let mut sum = 0.0f64;
    for j in 1..=k {
        let table = partition_table(k, j);
        let mut b = 0.0f64;
        for term in &table.terms {
            let mut prod = term.coeff.to_f64();
            for &(i, mult) in &term.factors {
                let xi = x[(i - 1) as usize];
                for _ in 0..mult {
                    prod *= xi;
                }
            }
            b += prod;
        }
        let mut weight = 1.0f64;
        for r in 1..j {
            weight *= r as f64;
        }
        sum += if j % 2 == 1 { weight * b } else { -weight * b };
    }
    sum
}

/// Logarithmic (partition) polynomial
/// `P_k = sum_{j=1}^k (-1)^(j-1) (j-1)! B_{k,j}`.
///
/// Feeding moments as variables returns cumulants; this is the inverse of the
/// formal exponential carried out by [`complete_bell`].
pub fn log_partition_poly(k: u32, x: &[Real]) -> Result<Real, BellError> {
    assert!(k >= 1, "log_partition_poly requires k >= 1");
    check_len(x, k as usize)?;
    let prec = x[0].prec();
    let mut sum = Float::with_val(prec, 0);
    for j in 1..=k {
        let b = partial_bell(k, j, x)?;
        let weight = Float::with_val(prec, Integer::from(Integer::factorial(j - 1)));
        if j % 2 == 1 {
            sum += weight * b;
        } else {
            sum -= weight * b;
        }
    }
    Ok(sum)
}
