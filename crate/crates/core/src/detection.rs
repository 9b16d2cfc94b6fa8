//! Hybrid islanding detection: slip-mode frequency shift, a ROCOF relay with
//! voltage blocking, over/under frequency (and optional voltage) relays, and
//! the supervisor in which the ROCOF relay arms SMS.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmsMode {
    /// Passive relays only.
    Off,
    /// SMS injects continuously (SMS-alone baseline).
    AlwaysOn,
    /// SMS injects only while the ROCOF relay has armed it.
    ArmedByRocof,
}

impl std::str::FromStr for SmsMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "off" => Ok(SmsMode::Off),
            "always_on" => Ok(SmsMode::AlwaysOn),
            "armed_by_rocof" => Ok(SmsMode::ArmedByRocof),
            other => Err(Error::invalid("mode", format!("unknown mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for SmsMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SmsMode::Off => "off",
            SmsMode::AlwaysOn => "always_on",
            SmsMode::ArmedByRocof => "armed_by_rocof",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmsParams {
    /// Peak phase shift, degrees.
    pub theta_m: f64,
    /// Frequency at which the peak shift occurs.
    pub f_m: f64,
    pub f_g: f64,
    pub mode: SmsMode,
}

impl Default for SmsParams {
    fn default() -> Self {
        Self {
            theta_m: 25.0,
            f_m: 63.0,
            f_g: 60.0,
            mode: SmsMode::ArmedByRocof,
        }
    }
}

impl SmsParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..90.0).contains(&self.theta_m) {
            return Err(Error::invalid(
                "detection.sms.theta_m",
                "must lie within [0, 90) degrees",
            ));
        }
        if !self.f_m.is_finite() || !self.f_g.is_finite() || self.f_m == self.f_g {
            return Err(Error::invalid("detection.sms.f_m", "must differ from f_g"));
        }
        Ok(())
    }
}

/// SMS phase shift in degrees:
/// `theta_m sin(pi/2 (f - f_g) / (f_m - f_g))`, unclamped beyond `f_m`.
pub fn sms_phase(f: f64, p: &SmsParams) -> f64 {
    p.theta_m * (FRAC_PI_2 * (f - p.f_g) / (p.f_m - p.f_g)).sin()
}

/// Slope of [`sms_phase`] in degrees per hertz.
pub fn sms_phase_slope(f: f64, p: &SmsParams) -> f64 {
    let k = FRAC_PI_2 / (p.f_m - p.f_g);
    p.theta_m * k * (k * (f - p.f_g)).cos()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelaySettings {
    /// ROCOF pickup, Hz/s.
    pub alpha: f64,
    /// Voltage below which the ROCOF relay is blocked, pu.
    pub beta: f64,
    pub f_over: f64,
    pub f_under: f64,
    pub v_over: f64,
    pub v_under: f64,
    pub voltage_relay: bool,
    /// Detection deadline after islanding, s.
    pub max_clearing: f64,
    /// Time with frequency in band and low ROCOF before SMS is disarmed, s.
    pub disarm_hold: f64,
}

impl Default for RelaySettings {
    fn default() -> Self {
        Self {
            alpha: 1.2,
            beta: 0.85,
            f_over: 60.5,
            f_under: 59.3,
            v_over: 1.10,
            v_under: 0.88,
            voltage_relay: false,
            max_clearing: 2.0,
            disarm_hold: 0.5,
        }
    }
}

impl RelaySettings {
    pub fn validate(&self) -> Result<()> {
        if !(0.1..=1.2).contains(&self.alpha) {
            return Err(Error::invalid(
                "detection.relays.alpha",
                "must lie within [0.1, 1.2] Hz/s",
            ));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::invalid(
                "detection.relays.beta",
                "must lie within (0, 1) pu",
            ));
        }
        if !(self.f_under < self.f_over) {
            return Err(Error::invalid(
                "detection.relays.f_under",
                "must be below f_over",
            ));
        }
        if !(self.v_under < self.v_over) {
            return Err(Error::invalid(
                "detection.relays.v_under",
                "must be below v_over",
            ));
        }
        if !(self.max_clearing > 0.0) {
            return Err(Error::invalid(
                "detection.relays.max_clearing",
                "must be positive",
            ));
        }
        if !(self.disarm_hold >= 0.0) {
            return Err(Error::invalid(
                "detection.relays.disarm_hold",
                "must be non-negative",
            ));
        }
        Ok(())
    }

    pub fn in_band(&self, f: f64) -> bool {
        f >= self.f_under && f <= self.f_over
    }
}

/// ROCOF pickup with voltage blocking.
pub fn rocof_relay(df_dt: f64, v_pcc_pu: f64, s: &RelaySettings) -> bool {
    df_dt.abs() > s.alpha && v_pcc_pu > s.beta
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripCause {
    OverF,
    UnderF,
    OverV,
    UnderV,
}

impl std::fmt::Display for TripCause {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TripCause::OverF => "over_f",
            TripCause::UnderF => "under_f",
            TripCause::OverV => "over_v",
            TripCause::UnderV => "under_v",
        })
    }
}

pub fn frequency_relay(f: f64, s: &RelaySettings) -> Option<TripCause> {
    if f > s.f_over {
        Some(TripCause::OverF)
    } else if f < s.f_under {
        Some(TripCause::UnderF)
    } else {
        None
    }
}

/// Backstop voltage relay; inert unless enabled in the settings.
pub fn voltage_relay(v_pu: f64, s: &RelaySettings) -> Option<TripCause> {
    if !s.voltage_relay {
        None
    } else if v_pu > s.v_over {
        Some(TripCause::OverV)
    } else if v_pu < s.v_under {
        Some(TripCause::UnderV)
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupervisorMode {
    Idle,
    Armed,
    Tripped,
}

impl std::fmt::Display for SupervisorMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SupervisorMode::Idle => "idle",
            SupervisorMode::Armed => "armed",
            SupervisorMode::Tripped => "tripped",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripEvent {
    pub t_trip: f64,
    pub cause: TripCause,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub t: f64,
    /// Frequency seen by the relays and the SMS law.
    pub f: f64,
    pub df_dt: f64,
    pub v_pu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupervisorOutput {
    /// Phase-shift command, radians.
    pub theta_f: f64,
    /// DG must cease to energize.
    pub shutdown: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupervisorState {
    pub mode: SupervisorMode,
    pub armed_since: Option<f64>,
    pub trip: Option<TripEvent>,
    /// Number of IDLE -> ARMED transitions.
    pub arm_count: usize,
    /// Longest completed or ongoing ARMED episode, s.
    pub longest_armed: f64,
    quiet_since: Option<f64>,
    last_t: Option<f64>,
}

impl Default for SupervisorState {
    fn default() -> Self {
        Self {
            mode: SupervisorMode::Idle,
            armed_since: None,
            trip: None,
            arm_count: 0,
            longest_armed: 0.0,
            quiet_since: None,
            last_t: None,
        }
    }
}

impl SupervisorState {
    pub fn is_tripped(&self) -> bool {
        self.mode == SupervisorMode::Tripped
    }

    pub fn supervisor_step(
        &mut self,
        m: &Measurement,
        sms: &SmsParams,
        relays: &RelaySettings,
    ) -> SupervisorOutput {
        debug_assert!(
            self.last_t.is_none_or(|t| m.t > t),
            "supervisor time must increase"
        );
        self.last_t = Some(m.t);

        if self.mode == SupervisorMode::Tripped {
            return SupervisorOutput {
                theta_f: 0.0,
                shutdown: true,
            };
        }

        if let Some(cause) = frequency_relay(m.f, relays).or_else(|| voltage_relay(m.v_pu, relays))
        {
            self.close_armed_episode(m.t);
            self.mode = SupervisorMode::Tripped;
            self.trip = Some(TripEvent { t_trip: m.t, cause });
            return SupervisorOutput {
                theta_f: 0.0,
                shutdown: true,
            };
        }

        if sms.mode == SmsMode::ArmedByRocof {
            match self.mode {
                SupervisorMode::Idle => {
                    if rocof_relay(m.df_dt, m.v_pu, relays) {
                        self.mode = SupervisorMode::Armed;
                        self.armed_since = Some(m.t);
                        self.quiet_since = None;
                        self.arm_count += 1;
                    }
                }
                SupervisorMode::Armed => {
                    let quiet = relays.in_band(m.f) && m.df_dt.abs() < 0.5 * relays.alpha;
                    if quiet {
                        let since = *self.quiet_since.get_or_insert(m.t);
                        if m.t - since >= relays.disarm_hold {
                            self.close_armed_episode(m.t);
                            self.mode = SupervisorMode::Idle;
                        }
                    } else {
                        self.quiet_since = None;
                    }
                    if let Some(t0) = self.armed_since {
                        self.longest_armed = self.longest_armed.max(m.t - t0);
                    }
                }
                SupervisorMode::Tripped => unreachable!(),
            }
        }

        let theta_deg = match sms.mode {
            SmsMode::Off => 0.0,
            SmsMode::AlwaysOn => sms_phase(m.f, sms),
            SmsMode::ArmedByRocof if self.mode == SupervisorMode::Armed => sms_phase(m.f, sms),
            SmsMode::ArmedByRocof => 0.0,
        };
        SupervisorOutput {
            theta_f: theta_deg.to_radians(),
            shutdown: false,
        }
    }

    fn close_armed_episode(&mut self, t: f64) {
        if let Some(t0) = self.armed_since.take() {
            self.longest_armed = self.longest_armed.max(t - t0);
        }
        self.quiet_since = None;
    }
}
