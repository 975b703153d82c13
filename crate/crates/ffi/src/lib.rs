//! C ABI over `betaweighter`.
//!
//! Objects cross the boundary as opaque handles created by `*_new` and
//! released by the matching `*_free`. Every fallible function returns a
//! [`BwStatus`] and writes results through out-pointers.

use std::ffi::{c_char, CStr};
use std::path::PathBuf;

use betaweighter::harness::{export_report, run_experiment, ExperimentConfig, MetricsReport};
use betaweighter::ndmath::{beta_cdf, beta_quantile, sample_beta, BetaParams, RandomStream};
use betaweighter::weighters::{prune_bdw, BetaWeightTable, PruneConfig, PruneRule};

mod status;

use status::{guard, null, Fail};
pub use status::{bw_last_error, BwStatus};

/// Seeded random stream.
pub struct BwRng(RandomStream);

/// Per-example Beta weight distributions with an active mask.
pub struct BwWeightTable(BetaWeightTable);

/// Experiment configuration; starts from the library defaults.
pub struct BwConfig(ExperimentConfig);

/// Result of a finished experiment run.
pub struct BwReport(MetricsReport);

unsafe fn get<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn get_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut T, v: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(v);
    Ok(())
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Fail(BwStatus::InvalidUtf8, format!("{what}: {e}")))
}

fn beta(a: f64, b: f64) -> Result<BetaParams, Fail> {
    Ok(BetaParams::new(a, b)?)
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

// ---- special functions ----

/// Regularized incomplete beta function I_x(a, b).
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bw_beta_cdf(x: f64, a: f64, b: f64, out: *mut f64) -> BwStatus {
    guard(|| put(out, beta_cdf(x, beta(a, b)?)?, "out"))
}

/// Inverse of `bw_beta_cdf` in x.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bw_beta_quantile(u: f64, a: f64, b: f64, out: *mut f64) -> BwStatus {
    guard(|| put(out, beta_quantile(u, beta(a, b)?)?, "out"))
}

// ---- random streams ----

/// # Safety
/// `out` must be valid for writes; release the handle with `bw_rng_free`.
#[no_mangle]
pub unsafe extern "C" fn bw_rng_new(seed: u64, stream: u64, out: *mut *mut BwRng) -> BwStatus {
    guard(|| put(out, Box::into_raw(Box::new(BwRng(RandomStream::new(seed, stream)))), "out"))
}

/// # Safety
/// `rng` must come from `bw_rng_new` and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn bw_rng_free(rng: *mut BwRng) {
    free(rng)
}

/// Draws one sample from Beta(a, b).
///
/// # Safety
/// `rng` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bw_rng_sample_beta(rng: *mut BwRng, a: f64, b: f64, out: *mut f64) -> BwStatus {
    guard(|| {
        let p = beta(a, b)?;
        let rng = get_mut(rng, "rng")?;
        put(out, sample_beta(p, &mut rng.0), "out")
    })
}

// ---- weight tables ----

/// Table of `n` uniform Beta(1, 1) priors, all active.
///
/// # Safety
/// `out` must be valid for writes; release with `bw_weight_table_free`.
#[no_mangle]
pub unsafe extern "C" fn bw_weight_table_new(n: usize, out: *mut *mut BwWeightTable) -> BwStatus {
    guard(|| put(out, Box::into_raw(Box::new(BwWeightTable(BetaWeightTable::new(n)))), "out"))
}

/// # Safety
/// `table` must come from `bw_weight_table_new`. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn bw_weight_table_free(table: *mut BwWeightTable) {
    free(table)
}

fn index(t: &BetaWeightTable, i: usize) -> Result<(), Fail> {
    if i < t.len() {
        Ok(())
    } else {
        Err(Fail(BwStatus::Contract, format!("index {i} out of range for {} entries", t.len())))
    }
}

/// # Safety
/// `table` must be a live handle; `a` and `b` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bw_weight_table_get(
    table: *const BwWeightTable,
    i: usize,
    a: *mut f64,
    b: *mut f64,
    active: *mut bool,
) -> BwStatus {
    guard(|| {
        let t = &get(table, "table")?.0;
        index(t, i)?;
        let p = t.params(i);
        put(a, p.a(), "a")?;
        put(b, p.b(), "b")?;
        put(active, t.is_active(i), "active")
    })
}

/// Sets the distribution of an active entry.
///
/// # Safety
/// `table` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn bw_weight_table_set(table: *mut BwWeightTable, i: usize, a: f64, b: f64) -> BwStatus {
    guard(|| {
        let t = &mut get_mut(table, "table")?.0;
        index(t, i)?;
        Ok(t.set_params(i, beta(a, b)?)?)
    })
}

/// # Safety
/// `table` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bw_weight_table_active_count(table: *const BwWeightTable, out: *mut usize) -> BwStatus {
    guard(|| put(out, get(table, "table")?.0.active_count(), "out"))
}

/// Writes the expected weight of every entry into
/// `out[0..len]`; `len` must equal the table size. Pruned entries keep
/// the mean they had when pruned.
///
/// # Safety
/// `out` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn bw_weight_table_expected(table: *const BwWeightTable, out: *mut f64, len: usize) -> BwStatus {
    guard(|| {
        let t = &get(table, "table")?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        if len != t.len() {
            return Err(Fail(BwStatus::Contract, format!("buffer holds {len} values, table has {}", t.len())));
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(&t.expected_weights());
        Ok(())
    })
}

/// Deactivates entries whose CDF at `lambda` exceeds `rho`. With
/// `keep_mass_below` the comparison is reversed.
///
/// # Safety
/// `table` must be a live handle; `pruned` may be null.
#[no_mangle]
pub unsafe extern "C" fn bw_weight_table_prune(
    table: *mut BwWeightTable,
    lambda: f64,
    rho: f64,
    keep_mass_below: bool,
    pruned: *mut usize,
) -> BwStatus {
    guard(|| {
        let t = &mut get_mut(table, "table")?.0;
        let rule = if keep_mass_below { PruneRule::KeepMassBelow } else { PruneRule::MassBelow };
        let mut pc = PruneConfig::new(lambda, rho)?;
        pc.rule = rule;
        let n = prune_bdw(t, &pc)?;
        if !pruned.is_null() {
            pruned.write(n);
        }
        Ok(())
    })
}

// ---- experiments ----

/// # Safety
/// `out` must be valid for writes; release with `bw_config_free`.
#[no_mangle]
pub unsafe extern "C" fn bw_config_new(out: *mut *mut BwConfig) -> BwStatus {
    guard(|| put(out, Box::into_raw(Box::new(BwConfig(ExperimentConfig::default()))), "out"))
}

/// # Safety
/// `config` must come from `bw_config_new`. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn bw_config_free(config: *mut BwConfig) {
    free(config)
}

/// Sets one option by name, as in an INI file (`"eta"`, `"method"`, ...).
///
/// # Safety
/// `config` must be a live handle; `key` and `value` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn bw_config_set(config: *mut BwConfig, key: *const c_char, value: *const c_char) -> BwStatus {
    guard(|| {
        let cfg = &mut get_mut(config, "config")?.0;
        Ok(cfg.set(text(key, "key")?, text(value, "value")?)?)
    })
}

/// Applies `key = value` lines on top of the current settings.
///
/// # Safety
/// `config` must be a live handle; `ini` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn bw_config_apply_ini(config: *mut BwConfig, ini: *const c_char) -> BwStatus {
    guard(|| Ok(get_mut(config, "config")?.0.apply_ini(text(ini, "ini")?)?))
}

/// Trains and evaluates. Writes report files too when `out` is configured.
///
/// # Safety
/// `config` must be a live handle and `out` valid for writes; release the
/// report with `bw_report_free`.
#[no_mangle]
pub unsafe extern "C" fn bw_run(config: *const BwConfig, out: *mut *mut BwReport) -> BwStatus {
    guard(|| {
        let cfg = &get(config, "config")?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        let report = run_experiment(cfg)?;
        out.write(Box::into_raw(Box::new(BwReport(report))));
        Ok(())
    })
}

/// # Safety
/// `report` must come from `bw_run`. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn bw_report_free(report: *mut BwReport) {
    free(report)
}

/// # Safety
/// `report` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bw_report_epochs(report: *const BwReport, out: *mut usize) -> BwStatus {
    guard(|| put(out, get(report, "report")?.0.epochs.len(), "out"))
}

/// Test loss after epoch `epoch` (zero-based).
///
/// # Safety
/// `report` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bw_report_test_loss(report: *const BwReport, epoch: usize, out: *mut f64) -> BwStatus {
    guard(|| {
        let r = &get(report, "report")?.0;
        let rec = r.epochs.get(epoch).ok_or_else(|| {
            Fail(BwStatus::Contract, format!("epoch {epoch} out of range for {} epochs", r.epochs.len()))
        })?;
        put(out, rec.test_loss, "out")
    })
}

/// Writes metrics.jsonl, summary.csv and weights.csv into `dir`.
///
/// # Safety
/// `report` must be a live handle; `dir` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn bw_report_export(report: *const BwReport, dir: *const c_char) -> BwStatus {
    guard(|| {
        let r = &get(report, "report")?.0;
        Ok(export_report(r, &PathBuf::from(text(dir, "dir")?))?)
    })
}
