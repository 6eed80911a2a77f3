//! Solar harvesting model: sun position, plane-of-array transposition for a
//! tilted panel, panel electrical output, and the weekly per-application
//! budget distribution (CCDF) pipeline.
//!
//! The panel is assumed vertically mounted facing an arbitrary azimuth by
//! default. Sun position uses the low-accuracy series algorithm (fractional
//! year, Spencer-style declination and equation-of-time series, hour angle),
//! which stays within half a degree of a reference ephemeris — far more than
//! enough for hourly energy budgets. The diffuse sky is isotropic; the
//! ground-reflected term is off by default and can be enabled with a
//! configurable albedo.

use chrono::{Datelike, TimeZone, Timelike, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Seconds in one CCDF week block.
pub const WEEK_SECONDS: i64 = 7 * 24 * 3600;

/// One timestamped direct/diffuse irradiance sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrradianceRecord {
    /// UTC seconds since the Unix epoch.
    pub timestamp: i64,
    /// Direct-normal irradiance, W/m².
    pub dni_wm2: f64,
    /// Diffuse-horizontal irradiance, W/m².
    pub dhi_wm2: f64,
}

/// Panel geometry, efficiency, and site coordinates.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PanelConfig {
    pub area_m2: f64,
    /// Electrical conversion efficiency, fraction in (0, 1).
    pub efficiency: f64,
    /// Degrees from horizontal; 90 is vertical.
    pub tilt_deg: f64,
    /// Panel facing, degrees clockwise from north.
    pub azimuth_deg: f64,
    pub latitude_deg: f64,
    pub longitude_deg: f64,
    /// Include the ground-reflected term in the transposition.
    pub ground_reflection: bool,
    pub albedo: f64,
}

impl Default for PanelConfig {
    fn default() -> Self {
        PanelConfig {
            area_m2: 0.096,
            efficiency: 0.17,
            tilt_deg: 90.0,
            azimuth_deg: 180.0,
            latitude_deg: 37.87,
            longitude_deg: -122.26,
            ground_reflection: false,
            albedo: 0.2,
        }
    }
}

impl PanelConfig {
    /// Check the configuration invariants, returning the offending field.
    pub fn validate(&self) -> Result<(), String> {
        if !(self.area_m2 > 0.0) {
            return Err(format!("area_m2 must be > 0, got {}", self.area_m2));
        }
        if !(self.efficiency > 0.0 && self.efficiency < 1.0) {
            return Err(format!("efficiency must be in (0, 1), got {}", self.efficiency));
        }
        if !(0.0..=90.0).contains(&self.tilt_deg) {
            return Err(format!("tilt_deg must be in [0, 90], got {}", self.tilt_deg));
        }
        if !(0.0..360.0).contains(&self.azimuth_deg) {
            return Err(format!("azimuth_deg must be in [0, 360), got {}", self.azimuth_deg));
        }
        if !(-90.0..=90.0).contains(&self.latitude_deg) {
            return Err(format!("latitude_deg must be in [-90, 90], got {}", self.latitude_deg));
        }
        if !(-180.0..=180.0).contains(&self.longitude_deg) {
            return Err(format!("longitude_deg must be in [-180, 180], got {}", self.longitude_deg));
        }
        if !(0.0..=1.0).contains(&self.albedo) {
            return Err(format!("albedo must be in [0, 1], got {}", self.albedo));
        }
        Ok(())
    }
}

/// Sun position as seen from a site, all angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SunPosition {
    /// Elevation above the horizon; negative at night.
    pub elevation_deg: f64,
    /// Clockwise from north.
    pub azimuth_deg: f64,
    pub declination_deg: f64,
    pub hour_angle_deg: f64,
}

/// Weekly budget CCDF: `(budget_mw, fraction of weeks at or above it)`,
/// sorted ascending in budget.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetDistribution {
    points: Vec<(f64, f64)>,
    n_weeks: usize,
}

#[derive(Debug, Error, PartialEq)]
pub enum HarvestError {
    /// The trace does not cover one full week.
    #[error("insufficient data: trace must cover at least one full week ({0})")]
    InsufficientData(String),
}

/// Compute the sun's position for a UTC timestamp and site coordinates.
///
/// Total function: any timestamp and valid coordinates yield a position
/// (elevation is negative when the sun is below the horizon).
pub fn sun_position(timestamp: i64, latitude_deg: f64, longitude_deg: f64) -> SunPosition {
    let dt = Utc.timestamp_opt(timestamp, 0).single().expect("valid unix timestamp");
    let days_in_year = if dt.date_naive().leap_year() { 366.0 } else { 365.0 };
    let doy = dt.ordinal() as f64;
    let hour = dt.hour() as f64 + dt.minute() as f64 / 60.0 + dt.second() as f64 / 3600.0;

    // Fractional year, radians.
    let g = std::f64::consts::TAU / days_in_year * (doy - 1.0 + (hour - 12.0) / 24.0);

    // Equation of time (minutes) and declination (radians), series form.
    let eqtime_min = 229.18
        * (0.000075 + 0.001868 * g.cos()
            - 0.032077 * g.sin()
            - 0.014615 * (2.0 * g).cos()
            - 0.040849 * (2.0 * g).sin());
    let decl = 0.006918 - 0.399912 * g.cos() + 0.070257 * g.sin() - 0.006758 * (2.0 * g).cos()
        + 0.000907 * (2.0 * g).sin()
        - 0.002697 * (3.0 * g).cos()
        + 0.00148 * (3.0 * g).sin();

    // True solar time (minutes) with UTC reference, then hour angle.
    let tst = hour * 60.0 + eqtime_min + 4.0 * longitude_deg;
    let mut hour_angle_deg = tst / 4.0 - 180.0;
    if hour_angle_deg < -180.0 {
        hour_angle_deg += 360.0;
    }
    if hour_angle_deg > 180.0 {
        hour_angle_deg -= 360.0;
    }

    let lat = latitude_deg.to_radians();
    let ha = hour_angle_deg.to_radians();
    let cos_zen =
        (lat.sin() * decl.sin() + lat.cos() * decl.cos() * ha.cos()).clamp(-1.0, 1.0);
    let zen = cos_zen.acos();
    let elevation_deg = 90.0 - zen.to_degrees();

    // Azimuth clockwise from north; degenerate at the zenith where any value
    // is geometrically equivalent.
    let denom = lat.cos() * zen.sin();
    let azimuth_deg = if denom.abs() > 1e-12 {
        let az_cos = ((lat.sin() * cos_zen - decl.sin()) / denom).clamp(-1.0, 1.0);
        let az = az_cos.acos().to_degrees();
        if hour_angle_deg > 0.0 {
            (180.0 + az).rem_euclid(360.0)
        } else {
            (180.0 - az).rem_euclid(360.0)
        }
    } else {
        180.0
    };

    SunPosition {
        elevation_deg,
        azimuth_deg,
        declination_deg: decl.to_degrees(),
        hour_angle_deg,
    }
}

/// Cosine of the beam incidence angle on the panel plane.
fn cos_incidence(sun: &SunPosition, tilt_deg: f64, panel_azimuth_deg: f64) -> f64 {
    let elev = sun.elevation_deg.to_radians();
    let tilt = tilt_deg.to_radians();
    let daz = (sun.azimuth_deg - panel_azimuth_deg).to_radians();
    elev.cos() * tilt.sin() * daz.cos() + elev.sin() * tilt.cos()
}

/// Transpose direct/diffuse irradiance onto the panel plane (W/m²).
///
/// `POA = dni · max(0, cos θᵢ) + dhi · (1 + cos tilt)/2`, with the beam term
/// zeroed when the sun is below the horizon or behind the panel. With
/// `ground_reflection` enabled, `ghi · albedo · (1 − cos tilt)/2` is added.
pub fn plane_of_array(record: &IrradianceRecord, sun: &SunPosition, panel: &PanelConfig) -> f64 {
    let tilt = panel.tilt_deg.to_radians();
    let beam = if sun.elevation_deg > 0.0 {
        record.dni_wm2 * cos_incidence(sun, panel.tilt_deg, panel.azimuth_deg).max(0.0)
    } else {
        0.0
    };
    let diffuse = record.dhi_wm2 * (1.0 + tilt.cos()) / 2.0;
    let reflected = if panel.ground_reflection {
        let ghi = record.dhi_wm2
            + record.dni_wm2 * sun.elevation_deg.to_radians().sin().max(0.0);
        ghi * panel.albedo * (1.0 - tilt.cos()) / 2.0
    } else {
        0.0
    };
    (beam + diffuse + reflected).max(0.0)
}

/// Electrical power (W) produced at a given plane-of-array irradiance.
pub fn panel_power(poa_wm2: f64, panel: &PanelConfig) -> f64 {
    poa_wm2 * panel.area_m2 * panel.efficiency
}

/// Default fill factor for field-log power estimation.
pub const DEFAULT_FILL_FACTOR: f64 = 0.8;

/// Estimate panel power (W) from field measurements of open-circuit voltage
/// and short-circuit current.
pub fn estimate_field_power(voc_v: f64, isc_a: f64, fill_factor: f64) -> f64 {
    debug_assert!(voc_v >= 0.0 && isc_a >= 0.0);
    debug_assert!(fill_factor > 0.0 && fill_factor <= 1.0);
    voc_v * isc_a * fill_factor
}

/// Per-application budget (mW) from a weekly average harvest.
///
/// Subtracts the static platform draw, divides among the tenant slots, and
/// applies the charging/regulation chain efficiency. Clamped at zero.
pub fn per_app_budget(
    weekly_avg_harvest_mw: f64,
    static_power_mw: f64,
    n_apps: u32,
    chain_efficiency: f64,
) -> f64 {
    assert!(n_apps >= 1, "n_apps must be >= 1");
    assert!(
        chain_efficiency > 0.0 && chain_efficiency <= 1.0,
        "chain_efficiency must be in (0, 1]"
    );
    ((weekly_avg_harvest_mw - static_power_mw) / n_apps as f64 * chain_efficiency).max(0.0)
}

/// Longest sample gap (seconds) that is bridged by linear interpolation.
/// Anything longer invalidates the week(s) it touches.
pub const MAX_GAP_SECONDS: i64 = 3 * 3600;

/// Time-weighted average of a timestamped power trace over `[start, end)`.
///
/// Samples hold their value until the next sample at the trace's nominal
/// cadence; larger gaps up to [`MAX_GAP_SECONDS`] are bridged linearly.
/// Returns `None` if the window contains a gap beyond the limit or is not
/// fully covered.
fn window_average(trace: &[(i64, f64)], cadence_s: i64, start: i64, end: i64) -> Option<f64> {
    // Last sample at or before `start`.
    let after = trace.partition_point(|&(t, _)| t <= start);
    if after == 0 {
        return None;
    }
    let mut idx = after - 1;
    let mut cursor = start;
    let mut integral = 0.0; // mW·s
    while cursor < end {
        let (t0, p0) = trace[idx];
        match trace.get(idx + 1).copied() {
            Some((t1, p1)) => {
                let gap = t1 - t0;
                if gap > MAX_GAP_SECONDS {
                    return None;
                }
                let seg_end = end.min(t1);
                if seg_end > cursor {
                    let avg = if gap <= cadence_s {
                        p0
                    } else {
                        // Linear bridge across the gap, averaged over the
                        // covered part of the segment.
                        let lerp = |t: i64| p0 + (p1 - p0) * (t - t0) as f64 / gap as f64;
                        (lerp(cursor) + lerp(seg_end)) / 2.0
                    };
                    integral += avg * (seg_end - cursor) as f64;
                    cursor = seg_end;
                }
                idx += 1;
            }
            None => {
                // Final sample holds for one cadence.
                if t0 + cadence_s < end {
                    return None;
                }
                integral += p0 * (end - cursor) as f64;
                cursor = end;
            }
        }
    }
    Some(integral / (end - start) as f64)
}

/// Median inter-sample interval, used as the hold cadence.
fn nominal_cadence(trace: &[(i64, f64)]) -> i64 {
    let mut deltas: Vec<i64> = trace.windows(2).map(|w| w[1].0 - w[0].0).collect();
    if deltas.is_empty() {
        return 3600;
    }
    deltas.sort_unstable();
    deltas[deltas.len() / 2]
}

/// Per-week average harvest powers (mW) over consecutive 168-hour blocks
/// from the trace start. Weeks containing a gap longer than
/// [`MAX_GAP_SECONDS`] are dropped.
pub fn weekly_averages(trace: &[(i64, f64)]) -> Result<Vec<f64>, HarvestError> {
    if trace.len() < 2 {
        return Err(HarvestError::InsufficientData(format!(
            "{} samples",
            trace.len()
        )));
    }
    debug_assert!(
        trace.windows(2).all(|w| w[1].0 > w[0].0),
        "trace timestamps must be strictly increasing"
    );
    let cadence = nominal_cadence(trace);
    let start = trace[0].0;
    let last = trace[trace.len() - 1].0 + cadence;
    let full_weeks = (last - start) / WEEK_SECONDS;
    if full_weeks < 1 {
        return Err(HarvestError::InsufficientData(format!(
            "trace spans {} h",
            (last - start) / 3600
        )));
    }
    let mut out = Vec::new();
    for w in 0..full_weeks {
        let a = start + w * WEEK_SECONDS;
        let b = a + WEEK_SECONDS;
        if let Some(avg) = window_average(trace, cadence, a, b) {
            out.push(avg);
        }
    }
    if out.is_empty() {
        return Err(HarvestError::InsufficientData(
            "no week is fully covered after gap filtering".into(),
        ));
    }
    Ok(out)
}

/// Build the weekly budget CCDF from a timestamped harvest power trace (mW).
pub fn weekly_ccdf(
    trace: &[(i64, f64)],
    static_power_mw: f64,
    n_apps: u32,
    chain_efficiency: f64,
) -> Result<BudgetDistribution, HarvestError> {
    let budgets: Vec<f64> = weekly_averages(trace)?
        .into_iter()
        .map(|avg| per_app_budget(avg, static_power_mw, n_apps, chain_efficiency))
        .collect();
    Ok(BudgetDistribution::from_weekly_budgets(&budgets))
}

impl BudgetDistribution {
    /// Build the CCDF from per-week budgets.
    pub fn from_weekly_budgets(budgets: &[f64]) -> Self {
        assert!(!budgets.is_empty());
        let n = budgets.len();
        let mut sorted = budgets.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        sorted.dedup();
        let points = sorted
            .into_iter()
            .map(|b| {
                let at_or_above = budgets.iter().filter(|&&x| x >= b).count();
                (b, at_or_above as f64 / n as f64)
            })
            .collect();
        BudgetDistribution { points, n_weeks: n }
    }

    /// `(budget_mw, fraction_weeks)` points, ascending in budget.
    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn n_weeks(&self) -> usize {
        self.n_weeks
    }

    /// Fraction of weeks whose budget is at or above `budget_mw`.
    pub fn fraction_at_or_above(&self, budget_mw: f64) -> f64 {
        self.points
            .iter()
            .find(|&&(b, _)| b >= budget_mw)
            .map_or(0.0, |&(_, f)| f)
    }

    /// Largest budget available in at least `fraction` of weeks (e.g. 0.95
    /// for the 95th-percentile income level).
    pub fn budget_at_fraction(&self, fraction: f64) -> f64 {
        self.points
            .iter()
            .rev()
            .find(|&&(_, f)| f >= fraction)
            .map_or(0.0, |&(b, _)| b)
    }
}

/// Convert irradiance records into a harvest power trace (mW) for a panel.
pub fn harvest_trace(records: &[IrradianceRecord], panel: &PanelConfig) -> Vec<(i64, f64)> {
    records
        .iter()
        .map(|r| {
            let sun = sun_position(r.timestamp, panel.latitude_deg, panel.longitude_deg);
            let poa = plane_of_array(r, &sun, panel);
            (r.timestamp, panel_power(poa, panel) * 1000.0)
        })
        .collect()
}

/// Synthesize a clear-sky irradiance trace at fixed cadence, for demos and
/// synthetic-scenario tests. DNI follows the Meinel air-mass approximation;
/// DHI is a fixed 10% of DNI plus a small clear-sky floor.
pub fn synthetic_clear_sky(
    start_timestamp: i64,
    hours: usize,
    latitude_deg: f64,
    longitude_deg: f64,
) -> Vec<IrradianceRecord> {
    (0..hours)
        .map(|h| {
            let timestamp = start_timestamp + (h as i64) * 3600;
            let sun = sun_position(timestamp, latitude_deg, longitude_deg);
            let sin_e = sun.elevation_deg.to_radians().sin();
            let (dni, dhi) = if sin_e > 0.01 {
                let air_mass = 1.0 / sin_e;
                let dni = 1353.0 * 0.7f64.powf(air_mass.powf(0.678));
                (dni, 0.1 * dni + 20.0)
            } else {
                (0.0, 0.0)
            };
            IrradianceRecord { timestamp, dni_wm2: dni, dhi_wm2: dhi }
        })
        .collect()
}
