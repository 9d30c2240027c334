//! Decibel and power-unit helpers.

pub fn db_to_lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn lin_to_db(lin: f64) -> f64 {
    if lin <= 0.0 {
        f64::NEG_INFINITY
    } else {
        10.0 * lin.log10()
    }
}

pub fn dbm_to_w(dbm: f64) -> f64 {
    db_to_lin(dbm - 30.0)
}

pub fn w_to_dbm(w: f64) -> f64 {
    lin_to_db(w) + 30.0
}

pub fn mw_to_w(mw: f64) -> f64 {
    mw * 1e-3
}

/// Thermal noise power in watts: PSD (dBm/Hz) integrated over the band and
/// raised by the receiver noise figure.
pub fn noise_power_w(psd_dbm_per_hz: f64, bandwidth_hz: f64, noise_figure_db: f64) -> f64 {
    dbm_to_w(psd_dbm_per_hz + lin_to_db(bandwidth_hz) + noise_figure_db)
}
