//! DVFS/DPM energy model.
//!
//! Processor power is `a·f^α + b·f + c`; the frequency-dependent part can be
//! given either as a measured table (one value per supported frequency) or
//! as fitted `(a, b, α)` constants. When both are present the table is used
//! for every supported frequency.
//!
//! All quantities are SI (Hz, W, J, s). The fitted constants are kept in the
//! units they are usually quoted in: `a` in mW/GHz^α and `b` in mW/GHz.

use thiserror::Error;

/// Absolute tolerance for time comparisons, in seconds.
pub const TIME_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum PowerError {
    #[error("frequency must be positive, got {0} Hz")]
    NonPositiveFrequency(f64),
    #[error("frequency {0} Hz is not a supported operating point")]
    UnsupportedFrequency(f64),
    #[error("idle length {length} s lies outside [0, {period}] s")]
    IdleOutOfRange { length: f64, period: f64 },
    #[error("invalid power model: {0}")]
    Invalid(String),
}

/// Fitted `a·f^α + b·f` with `a` in mW/GHz^α, `b` in mW/GHz.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PowerFit {
    pub a: f64,
    pub b: f64,
    pub alpha: f64,
}

impl PowerFit {
    /// Frequency-dependent power in watts.
    pub fn dynamic_power(&self, f_hz: f64) -> f64 {
        let ghz = f_hz * 1e-9;
        (self.a * ghz.powf(self.alpha) + self.b * ghz) * 1e-3
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PowerModel {
    /// Supported frequencies in Hz, strictly ascending.
    pub freqs: Vec<f64>,
    /// Measured frequency-dependent power (W) at each entry of `freqs`.
    pub table: Option<Vec<f64>>,
    pub fit: Option<PowerFit>,
    /// Frequency-independent power, W.
    pub c: f64,
    /// Combined sleep-entry and wake-up energy, J.
    pub e_sw: f64,
    /// Combined sleep-entry and wake-up time, s.
    pub t_sw: f64,
}

/// `max(t_sw, e_sw / c)`. With `c = 0` the energy arm is ignored.
pub fn break_even_time(c: f64, e_sw: f64, t_sw: f64) -> f64 {
    if c > 0.0 {
        t_sw.max(e_sw / c)
    } else {
        t_sw
    }
}

impl PowerModel {
    pub fn new(
        freqs: Vec<f64>,
        table: Option<Vec<f64>>,
        fit: Option<PowerFit>,
        c: f64,
        e_sw: f64,
        t_sw: f64,
    ) -> Result<Self, PowerError> {
        let model = Self {
            freqs,
            table,
            fit,
            c,
            e_sw,
            t_sw,
        };
        model.validate()?;
        Ok(model)
    }

    /// The five-point platform used throughout the experiments: 276 mW
    /// static power, 385 µJ / 5 ms sleep transitions.
    pub fn reference() -> Self {
        Self::new(
            vec![1.01e9, 1.26e9, 1.53e9, 1.81e9, 2.1e9],
            Some(vec![0.4309, 0.5568, 0.7107, 0.8965, 1.1182]),
            Some(PowerFit {
                a: 23.8729,
                b: 401.6654,
                alpha: 3.2941,
            }),
            0.276,
            385e-6,
            5e-3,
        )
        .expect("reference platform is valid")
    }

    pub fn validate(&self) -> Result<(), PowerError> {
        let bad = |msg: String| Err(PowerError::Invalid(msg));
        if self.freqs.is_empty() {
            return bad("at least one frequency is required".into());
        }
        if self.freqs.iter().any(|&f| !(f > 0.0 && f.is_finite())) {
            return bad("frequencies must be positive and finite".into());
        }
        if self.freqs.windows(2).any(|w| w[0] >= w[1]) {
            return bad("frequencies must be strictly ascending".into());
        }
        match (&self.table, &self.fit) {
            (None, None) => return bad("either a power table or a fit is required".into()),
            (Some(t), _) if t.len() != self.freqs.len() => {
                return bad(format!(
                    "power table has {} entries for {} frequencies",
                    t.len(),
                    self.freqs.len()
                ))
            }
            (Some(t), _) if t.iter().any(|&p| !(p >= 0.0)) => {
                return bad("table power values must be non-negative".into())
            }
            _ => {}
        }
        if let Some(fit) = &self.fit {
            if fit.a < 0.0 || fit.b < 0.0 || !(fit.alpha > 1.0) {
                return bad("fit needs a, b >= 0 and alpha > 1".into());
            }
        }
        for (name, v) in [("c", self.c), ("e_sw", self.e_sw), ("t_sw", self.t_sw)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and non-negative"));
            }
        }
        if self.c * self.break_even() < self.e_sw * (1.0 - 1e-12) {
            return bad("sleep transitions can never pay off (c·t_be < e_sw)".into());
        }
        Ok(())
    }

    pub fn num_freqs(&self) -> usize {
        self.freqs.len()
    }

    pub fn f_max(&self) -> f64 {
        *self.freqs.last().expect("validated non-empty")
    }

    pub fn f_min(&self) -> f64 {
        self.freqs[0]
    }

    /// Index of `f` in the supported set (relative match to 1e-9).
    pub fn freq_index(&self, f: f64) -> Option<usize> {
        self.freqs.iter().position(|&g| (g - f).abs() <= 1e-9 * g)
    }

    /// Total power at `f`, W. Table values are used at supported
    /// frequencies; anything else goes through the fit.
    pub fn power_at(&self, f: f64) -> Result<f64, PowerError> {
        if !(f > 0.0) {
            return Err(PowerError::NonPositiveFrequency(f));
        }
        if let (Some(table), Some(i)) = (&self.table, self.freq_index(f)) {
            return Ok(table[i] + self.c);
        }
        match &self.fit {
            Some(fit) => Ok(fit.dynamic_power(f) + self.c),
            None => Err(PowerError::UnsupportedFrequency(f)),
        }
    }

    /// Total power at `f` from the fitted constants alone.
    pub fn fitted_power_at(&self, f: f64) -> Option<f64> {
        self.fit.map(|fit| fit.dynamic_power(f) + self.c)
    }

    /// Energy of one cycle at supported frequency `f`, J.
    pub fn energy_per_cycle(&self, f: f64) -> Result<f64, PowerError> {
        if !(f > 0.0) {
            return Err(PowerError::NonPositiveFrequency(f));
        }
        self.freq_index(f).ok_or(PowerError::UnsupportedFrequency(f))?;
        Ok(self.power_at(f)? / f)
    }

    /// Per-cycle energy at each supported frequency, in `freqs` order.
    pub fn cycle_energies(&self) -> Vec<f64> {
        self.freqs
            .iter()
            .map(|&f| self.energy_per_cycle(f).expect("supported frequency"))
            .collect()
    }

    /// Minimum idle length for which sleeping is allowed and profitable.
    pub fn break_even(&self) -> f64 {
        break_even_time(self.c, self.e_sw, self.t_sw)
    }

    /// Whether an idle interval of `length` seconds is long enough to sleep.
    pub fn can_switch(&self, length: f64) -> bool {
        length >= self.break_even() - TIME_TOL
    }

    /// Energy spent over one idle interval when sleep is used whenever allowed.
    pub fn idle_energy(&self, length: f64, period: f64) -> Result<f64, PowerError> {
        if length < -TIME_TOL || length > period + TIME_TOL {
            return Err(PowerError::IdleOutOfRange { length, period });
        }
        if length >= period - TIME_TOL {
            return Ok(0.0);
        }
        Ok(self.idle_energy_flagged(length, self.can_switch(length)))
    }

    /// Energy of a between-task or wrap-around interval with an explicit
    /// sleep decision. Intervals shorter than [`TIME_TOL`] cost nothing.
    pub fn idle_energy_flagged(&self, length: f64, switched: bool) -> f64 {
        if length < TIME_TOL {
            0.0
        } else if switched {
            self.e_sw
        } else {
            self.c * length.max(0.0)
        }
    }

    /// Lower convex envelope of execution energy against duration for a
    /// task of `workload` cycles.
    pub fn exec_envelope(&self, workload: f64) -> EnergyEnvelope {
        EnergyEnvelope::new(self, workload)
    }
}

/// Piecewise-linear minimum execution energy as a function of duration.
///
/// Vertices are pure single-frequency executions; the segment between two
/// vertices is realized by splitting the cycles between those two
/// frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyEnvelope {
    /// `(duration, energy, frequency index)`, durations strictly ascending.
    pub breakpoints: Vec<(f64, f64, usize)>,
}

impl EnergyEnvelope {
    fn new(model: &PowerModel, workload: f64) -> Self {
        let e = model.cycle_energies();
        // Ascending duration means descending frequency.
        let mut pts: Vec<(f64, f64, usize)> = (0..model.num_freqs())
            .rev()
            .map(|i| (workload / model.freqs[i], workload * e[i], i))
            .collect();
        pts.dedup_by(|b, a| (a.0 - b.0).abs() <= 0.0);
        let mut hull: Vec<(f64, f64, usize)> = Vec::with_capacity(pts.len());
        for p in pts {
            while hull.len() >= 2 {
                let a = hull[hull.len() - 2];
                let b = hull[hull.len() - 1];
                // Drop b if it lies on or above segment a-p.
                let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
                if cross <= 0.0 {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(p);
        }
        Self { breakpoints: hull }
    }

    pub fn min_duration(&self) -> f64 {
        self.breakpoints[0].0
    }

    pub fn max_duration(&self) -> f64 {
        self.breakpoints[self.breakpoints.len() - 1].0
    }

    /// Minimum energy for exactly `duration` seconds; `None` outside range.
    pub fn energy_at(&self, duration: f64) -> Option<f64> {
        self.segment_at(duration).map(|(lo, hi, w)| lo.1 + w * (hi.1 - lo.1))
    }

    /// The two adjacent vertices bracketing `duration` and the weight of the
    /// slower one.
    #[allow(clippy::type_complexity)]
    pub fn segment_at(&self, duration: f64) -> Option<((f64, f64, usize), (f64, f64, usize), f64)> {
        let tol = 1e-12 * self.max_duration();
        if duration < self.min_duration() - tol || duration > self.max_duration() + tol {
            return None;
        }
        let bp = &self.breakpoints;
        if bp.len() == 1 {
            return Some((bp[0], bp[0], 0.0));
        }
        let k = bp.windows(2).position(|w| duration <= w[1].0).unwrap_or(bp.len() - 2);
        let (lo, hi) = (bp[k], bp[k + 1]);
        let w = ((duration - lo.0) / (hi.0 - lo.0)).clamp(0.0, 1.0);
        Some((lo, hi, w))
    }

    /// Slopes `dE/dD` of consecutive segments.
    pub fn slopes(&self) -> Vec<f64> {
        self.breakpoints
            .windows(2)
            .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
            .collect()
    }
}
