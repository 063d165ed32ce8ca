//! Power and area roll-up.
//!
//! Laser power per channel:
//!
//! ```text
//! P = (κ·2^b_out)² · (q·f_c/4) / (η_det · η_array · η_mod · η_cpl · η_laser)
//! η_array = 10^(−loss_mzi·(2m+1)/10)
//! ```
//!
//! with `η = 10^(−dB/10)` for the losses given in dB. Total laser power is
//! `m · P` per core and wavelength.

use serde::{Deserialize, Serialize};

use crate::mesh::MeshErrorModel;
use crate::nonlinear::{ceil_ratio, DigitalUnitConfig};
use crate::timing::{AcceleratorConfig, CoreType, ParallelMode};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DacRef {
    pub bits: u32,
    pub power_w: f64,
    pub rate_hz: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdcParams {
    pub power_w: f64,
    pub rate_hz: f64,
    /// Device resolution; the SNR target is `DeviceParams::b_out`.
    pub bits: u32,
}

/// Area per device, mm².
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AreaTable {
    pub mzi: f64,
    pub modulator: f64,
    pub detector: f64,
    pub adc: f64,
    pub dac: f64,
    pub pe: f64,
    pub sram_per_mb: f64,
    pub digital_lane: f64,
}

impl Default for AreaTable {
    fn default() -> Self {
        Self {
            mzi: 0.005,
            modulator: 0.01,
            detector: 0.002,
            adc: 0.03,
            dac: 0.01,
            pe: 0.001,
            sram_per_mb: 1.2,
            digital_lane: 0.002,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceParams {
    pub kappa: f64,
    /// Output SNR target in bits.
    pub b_out: u32,
    /// Input DAC bits.
    pub b_in: u32,
    /// Weight DAC bits.
    pub b_w: u32,
    /// Elementary charge, C.
    pub q: f64,
    pub eta_mod_db: f64,
    pub mzi_loss_db: f64,
    pub eta_cpl_db: f64,
    pub eta_det: f64,
    pub eta_laser: f64,
    pub dac_ref: DacRef,
    pub adc: AdcParams,
    pub e_o_j_per_bit: f64,
    pub o_e_j_per_bit: f64,
    pub dram_j_per_bit: f64,
    pub d2d_j_per_bit: f64,
    pub sram_j_per_bit: f64,
    /// One systolic PE at the systolic clock.
    pub pe_power_w: f64,
    /// One digital lane replica at `f_asic`.
    pub digital_lane_power_w: f64,
    pub area: AreaTable,
    /// Per-MZI phase error std-dev, radians.
    pub eps_phi: f64,
    /// Coupler splitting error std-dev.
    pub eps_dc: f64,
    pub mesh_error: MeshErrorModel,
}

impl Default for DeviceParams {
    fn default() -> Self {
        Self {
            kappa: 3.0,
            b_out: 8,
            b_in: 10,
            b_w: 12,
            q: 1.602176634e-19,
            eta_mod_db: 1.2,
            mzi_loss_db: 0.04,
            eta_cpl_db: 2.0,
            eta_det: 0.8,
            eta_laser: 0.2,
            dac_ref: DacRef {
                bits: 14,
                power_w: 0.177,
                rate_hz: 10e9,
            },
            adc: AdcParams {
                power_w: 0.029,
                rate_hz: 5e9,
                bits: 10,
            },
            e_o_j_per_bit: 20e-15,
            o_e_j_per_bit: 297e-15,
            dram_j_per_bit: 20e-12,
            d2d_j_per_bit: 0.3e-12,
            sram_j_per_bit: 0.05e-12,
            pe_power_w: 0.5e-3,
            digital_lane_power_w: 1e-3,
            area: AreaTable::default(),
            eps_phi: 1e-4,
            eps_dc: 1e-3,
            mesh_error: MeshErrorModel::default(),
        }
    }
}

pub fn db_to_eff(db: f64) -> f64 {
    10f64.powf(-db / 10.0)
}

impl DeviceParams {
    pub fn validate(&self) -> Result<(), String> {
        for (name, eta) in [("eta_det", self.eta_det), ("eta_laser", self.eta_laser)] {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(format!("{name} must be in (0, 1]"));
            }
        }
        let nonneg = [
            ("kappa", self.kappa),
            ("eta_mod_db", self.eta_mod_db),
            ("mzi_loss_db", self.mzi_loss_db),
            ("eta_cpl_db", self.eta_cpl_db),
            ("dac_ref.power_w", self.dac_ref.power_w),
            ("adc.power_w", self.adc.power_w),
            ("e_o_j_per_bit", self.e_o_j_per_bit),
            ("o_e_j_per_bit", self.o_e_j_per_bit),
            ("dram_j_per_bit", self.dram_j_per_bit),
            ("d2d_j_per_bit", self.d2d_j_per_bit),
            ("sram_j_per_bit", self.sram_j_per_bit),
            ("pe_power_w", self.pe_power_w),
            ("digital_lane_power_w", self.digital_lane_power_w),
            ("eps_phi", self.eps_phi),
            ("eps_dc", self.eps_dc),
        ];
        if let Some((name, _)) = nonneg.iter().find(|(_, v)| !(v.is_finite() && *v >= 0.0)) {
            return Err(format!("{name} must be finite and >= 0"));
        }
        if !(self.dac_ref.rate_hz > 0.0 && self.adc.rate_hz > 0.0) {
            return Err("converter rates must be > 0".into());
        }
        if self.b_in > self.dac_ref.bits || self.b_w > self.dac_ref.bits {
            return Err("DAC bits exceed the reference DAC resolution".into());
        }
        Ok(())
    }

    pub fn eta_array(&self, m: u64) -> f64 {
        db_to_eff(self.mzi_loss_db * (2 * m + 1) as f64)
    }
}

/// Laser power for one optical channel, watts.
pub fn laser_power_per_channel(m: u64, f_c: f64, p: &DeviceParams) -> f64 {
    let snr = p.kappa * 2f64.powi(p.b_out as i32);
    let eta = p.eta_det * p.eta_array(m) * db_to_eff(p.eta_mod_db) * db_to_eff(p.eta_cpl_db) * p.eta_laser;
    snr * snr * (p.q * f_c / 4.0) / eta
}

/// Equal-FoM DAC power: halves per bit removed, linear in sample rate.
pub fn dac_power(bits: u32, rate_hz: f64, p: &DeviceParams) -> Result<f64, String> {
    if bits == 0 || bits > p.dac_ref.bits {
        return Err(format!("DAC bits must be in 1..={}", p.dac_ref.bits));
    }
    Ok(p.dac_ref.power_w / 2f64.powi((p.dac_ref.bits - bits) as i32) * (rate_hz / p.dac_ref.rate_hz))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceCounts {
    pub mzis: u64,
    pub weight_dacs: u64,
    pub input_dacs: u64,
    pub modulators: u64,
    pub detectors: u64,
    pub adcs: u64,
    pub pes: u64,
    pub digital_lanes: u64,
}

/// Cores with their own mesh and weight DACs, and optical channels per mesh.
fn multiplicity(cfg: &AcceleratorConfig) -> (u64, u64) {
    match cfg.parallel_mode {
        ParallelMode::Wdm => (1, cfg.n_wdm),
        ParallelMode::Data | ParallelMode::Tile => (cfg.n_cores, 1),
    }
}

pub fn adcs_per_channel(f_c: f64, p: &DeviceParams) -> u64 {
    ceil_ratio(f_c, p.adc.rate_hz).max(1)
}

pub fn device_counts(cfg: &AcceleratorConfig, digital: &DigitalUnitConfig, p: &DeviceParams) -> DeviceCounts {
    let (cores, wavelengths) = multiplicity(cfg);
    let m = cfg.m;
    let channels = m * cores * wavelengths;
    let digital_lanes = digital.lanes * digital.n_units() * cores * wavelengths;
    match cfg.core {
        CoreType::PhotoCore => DeviceCounts {
            // Two meshes of m(m-1)/2 plus m attenuators.
            mzis: m * m * cores,
            weight_dacs: (m * m).div_ceil(cfg.zeta) * cores,
            input_dacs: channels,
            modulators: channels,
            detectors: channels,
            adcs: channels * adcs_per_channel(cfg.f_c, p),
            pes: 0,
            digital_lanes,
        },
        CoreType::SystolicArray => DeviceCounts {
            pes: cfg.sa_replicas().ceil() as u64 * cores * m * m,
            digital_lanes,
            ..DeviceCounts::default()
        },
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConverterPower {
    pub input_dacs: f64,
    pub weight_dacs: f64,
    pub adcs: f64,
    pub e_o: f64,
    pub o_e: f64,
}

/// Converter power of a photo-core configuration. `duty_weight` is the
/// fraction of time the weight DACs are programming.
pub fn converter_power(
    m: u64,
    f_c: f64,
    duty_weight: f64,
    cfg: &AcceleratorConfig,
    p: &DeviceParams,
) -> Result<ConverterPower, String> {
    let (cores, wavelengths) = multiplicity(cfg);
    let channels = (m * cores * wavelengths) as f64;
    Ok(ConverterPower {
        input_dacs: channels * dac_power(p.b_in, f_c, p)?,
        weight_dacs: ((m * m).div_ceil(cfg.zeta) * cores) as f64
            * dac_power(p.b_w, p.dac_ref.rate_hz, p)?
            * duty_weight.clamp(0.0, 1.0),
        adcs: channels * adcs_per_channel(f_c, p) as f64 * p.adc.power_w,
        e_o: p.e_o_j_per_bit * f64::from(p.b_in) * channels * f_c,
        o_e: p.o_e_j_per_bit * f64::from(p.b_out) * channels * f_c,
    })
}

/// Bytes moved during one batch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Traffic {
    pub sram_bytes: u64,
    pub dram_bytes: u64,
    pub d2d_bytes: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrafficPower {
    pub sram: f64,
    pub dram: f64,
    pub d2d: f64,
}

pub fn traffic_energy(traffic: &Traffic, elapsed_s: f64, p: &DeviceParams) -> TrafficPower {
    let watts = |bytes: u64, j_per_bit: f64| bytes as f64 * 8.0 * j_per_bit / elapsed_s;
    TrafficPower {
        sram: watts(traffic.sram_bytes, p.sram_j_per_bit),
        dram: watts(traffic.dram_bytes, p.dram_j_per_bit),
        d2d: watts(traffic.d2d_bytes, p.d2d_j_per_bit),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PowerBreakdown {
    pub laser: f64,
    pub input_dacs: f64,
    pub weight_dacs: f64,
    pub adcs: f64,
    pub e_o: f64,
    pub o_e: f64,
    pub sram: f64,
    pub dram: f64,
    pub d2d: f64,
    pub digital_unit: f64,
    pub pes: f64,
}

impl PowerBreakdown {
    pub fn components(&self) -> [(&'static str, f64); 11] {
        [
            ("laser", self.laser),
            ("input_dacs", self.input_dacs),
            ("weight_dacs", self.weight_dacs),
            ("adcs", self.adcs),
            ("e_o", self.e_o),
            ("o_e", self.o_e),
            ("sram", self.sram),
            ("dram", self.dram),
            ("d2d", self.d2d),
            ("digital_unit", self.digital_unit),
            ("pes", self.pes),
        ]
    }

    pub fn total(&self) -> f64 {
        self.components().iter().map(|(_, w)| w).sum()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AreaBreakdown {
    pub mzis: f64,
    pub modulators: f64,
    pub detectors: f64,
    pub dacs: f64,
    pub adcs: f64,
    pub sram: f64,
    pub digital_unit: f64,
    pub pes: f64,
}

impl AreaBreakdown {
    pub fn components(&self) -> [(&'static str, f64); 8] {
        [
            ("mzis", self.mzis),
            ("modulators", self.modulators),
            ("detectors", self.detectors),
            ("dacs", self.dacs),
            ("adcs", self.adcs),
            ("sram", self.sram),
            ("digital_unit", self.digital_unit),
            ("pes", self.pes),
        ]
    }

    pub fn total(&self) -> f64 {
        self.components().iter().map(|(_, a)| a).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerReport {
    pub watts: PowerBreakdown,
    pub total_w: f64,
    pub area_mm2: AreaBreakdown,
    pub total_mm2: f64,
    pub devices: DeviceCounts,
}

/// Run-level activity consumed by the roll-up.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Activity {
    pub elapsed_s: f64,
    /// Fraction of time spent programming weights.
    pub weight_duty: f64,
    pub traffic: Traffic,
}

pub fn area(cfg: &AcceleratorConfig, counts: &DeviceCounts, p: &DeviceParams) -> AreaBreakdown {
    let a = &p.area;
    AreaBreakdown {
        mzis: counts.mzis as f64 * a.mzi,
        modulators: counts.modulators as f64 * a.modulator,
        detectors: counts.detectors as f64 * a.detector,
        dacs: (counts.weight_dacs + counts.input_dacs) as f64 * a.dac,
        adcs: counts.adcs as f64 * a.adc,
        sram: (cfg.act_sram_bytes + cfg.weight_sram_bytes) as f64 / 1e6 * a.sram_per_mb,
        digital_unit: counts.digital_lanes as f64 * a.digital_lane,
        pes: counts.pes as f64 * a.pe,
    }
}

pub fn rollup(
    cfg: &AcceleratorConfig,
    digital: &DigitalUnitConfig,
    p: &DeviceParams,
    activity: &Activity,
) -> Result<PowerReport, String> {
    let counts = device_counts(cfg, digital, p);
    let traffic = traffic_energy(&activity.traffic, activity.elapsed_s, p);
    let digital_unit = counts.digital_lanes as f64 * p.digital_lane_power_w;
    let watts = match cfg.core {
        CoreType::PhotoCore => {
            let (cores, wavelengths) = multiplicity(cfg);
            let conv = converter_power(cfg.m, cfg.f_c, activity.weight_duty, cfg, p)?;
            PowerBreakdown {
                laser: (cfg.m * cores * wavelengths) as f64 * laser_power_per_channel(cfg.m, cfg.f_c, p),
                input_dacs: conv.input_dacs,
                weight_dacs: conv.weight_dacs,
                adcs: conv.adcs,
                e_o: conv.e_o,
                o_e: conv.o_e,
                sram: traffic.sram,
                dram: traffic.dram,
                d2d: traffic.d2d,
                digital_unit,
                pes: 0.0,
            }
        }
        CoreType::SystolicArray => PowerBreakdown {
            sram: traffic.sram,
            dram: traffic.dram,
            digital_unit,
            pes: cfg.sa_replicas() * (cfg.n_cores * cfg.m * cfg.m) as f64 * p.pe_power_w,
            ..PowerBreakdown::default()
        },
    };
    let area_mm2 = area(cfg, &counts, p);
    Ok(PowerReport {
        total_w: watts.total(),
        watts,
        total_mm2: area_mm2.total(),
        area_mm2,
        devices: counts,
    })
}
