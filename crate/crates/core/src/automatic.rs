//! The inverter's default rule cascade, applied one hour at a time.
//!
//! Load is met in order by solar, battery, then grid; leftover solar goes to
//! the battery, then the grid. The battery never charges from the grid and
//! never discharges to the grid in this mode.

use crate::battery::{soc_transition, BatteryConfig, SocState};

/// All energy flows for one simulated hour, plus the end-of-hour SoC.
///
/// Balance holds exactly: `load - pv = (discharge - charge) + import - export`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HourlyFlows {
    pub import_kwh: f64,
    pub export_kwh: f64,
    pub discharge_kwh: f64,
    pub charge_kwh: f64,
    pub soc_end: SocState,
}

impl HourlyFlows {
    /// Net battery flow, positive when discharging.
    pub fn battery_flow_kwh(&self) -> f64 {
        self.discharge_kwh - self.charge_kwh
    }
}

/// Run the automatic rules for one hour from `s_prev` with actual `load_kwh`
/// and `pv_kwh`.
pub fn automatic_step(
    cfg: &BatteryConfig,
    s_prev: SocState,
    load_kwh: f64,
    pv_kwh: f64,
) -> HourlyFlows {
    debug_assert!(load_kwh >= 0.0 && pv_kwh >= 0.0);
    if load_kwh > pv_kwh {
        // Deficit: battery first (as much as it can deliver), grid covers the rest.
        let deficit = load_kwh - pv_kwh;
        let q = deficit
            .min(cfg.rate_limit_kwh)
            .min(cfg.discharge_headroom(s_prev));
        let soc_end = soc_transition(cfg, s_prev, q, 0.0)
            .expect("discharge within headroom stays in bounds");
        HourlyFlows {
            import_kwh: deficit - q,
            export_kwh: 0.0,
            discharge_kwh: q,
            charge_kwh: 0.0,
            soc_end,
        }
    } else if pv_kwh > load_kwh {
        // Surplus: battery absorbs what it can, the rest is exported.
        let surplus = pv_kwh - load_kwh;
        let r = surplus
            .min(cfg.rate_limit_kwh)
            .min(cfg.charge_headroom(s_prev));
        let soc_end =
            soc_transition(cfg, s_prev, 0.0, r).expect("charge within headroom stays in bounds");
        HourlyFlows {
            import_kwh: 0.0,
            export_kwh: surplus - r,
            discharge_kwh: 0.0,
            charge_kwh: r,
            soc_end,
        }
    } else {
        HourlyFlows {
            import_kwh: 0.0,
            export_kwh: 0.0,
            discharge_kwh: 0.0,
            charge_kwh: 0.0,
            soc_end: s_prev,
        }
    }
}
