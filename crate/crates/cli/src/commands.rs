use std::f64::consts::PI;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::json;
use tko_core::esa_pipeline::{esa_demodulate_with, positivity_report, EsaEstimate};
use tko_core::gaussian_model::noise_scale_for_snr;
use tko_core::mc_oracle::{sample_modes, sample_noise_path_stream, sample_quadform, sample_ratio, Histogram, QuadformSamples};
use tko_core::operator_kernels::{discriminator_extrema, response_zeros};
use tko_core::quadform_stats::{cdf_numeric, pdf_numeric, ChfEvaluator, ChfVariant};
use tko_core::ratio_stats::{edges_around, ratio_pdf_conditioned, ratio_pdf_geary};
use tko_core::scenario::{output_snr_db, ToneScenario};
use tko_core::two_tone_analysis::{negative_excursion_stats, ExtremumKind};
use tko_core::{
    decompose, CovarianceKernel, DensityGrid, GaussianVectorModel, McConfig, OperatorKernel, RatioSpec,
    SampledSignal, SignalSpec, TkoError, TwoToneSignal,
};

use crate::args::{Common, CumulantArgs, DistArgs, EsaArgs, FreqArgs, KernelArgs, ModelArgs, RatioArgs, RatioMethod, TwoToneArgs, Variant};
use crate::output::{Cell, Output, Table};

pub struct CmdResult {
    pub output: Output,
    /// Set when output was produced but failed its numerical checks.
    pub failure: Option<String>,
}

impl CmdResult {
    fn ok(output: Output) -> Self {
        Self { output, failure: None }
    }
}

fn config<A: Serialize>(common: &Common, args: &A) -> serde_json::Value {
    json!({ "common": common, "args": args })
}

fn kernel(k: &KernelArgs) -> Result<OperatorKernel> {
    Ok(OperatorKernel::new(k.p, k.q)?)
}

fn grid(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>> {
    if points < 2 || !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(TkoError::InvalidParameter(format!("grid needs lo < hi and at least 2 points, got [{lo}, {hi}] with {points}")).into());
    }
    Ok((0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect())
}

fn mc_config(common: &Common) -> McConfig {
    McConfig::new(common.seed, common.mc_samples)
}

pub fn freq_response(common: &Common, a: &FreqArgs) -> Result<CmdResult> {
    let k = kernel(&a.kernel)?.with_interval(a.interval)?;
    let hi = a.omega_max.unwrap_or(PI / a.interval);
    let omegas = grid(0.0, hi, a.points)?;
    let mut out = Output::new("freq-response", config(common, a));
    let mut t = Table::new("response", &["omega_rad_per_s", "response"]);
    let values: Vec<f64> = omegas.iter().map(|&w| tko_core::freq_response(&k, w)).collect();
    for (w, r) in omegas.iter().zip(&values) {
        t.push(vec![(*w).into(), (*r).into()]);
    }
    out.tables.push(t);
    out.report("kernel", k.label());
    out.report("shape", if k.p() == 0 { "unipolar" } else { "bipolar" });
    out.report("min_response", values.iter().copied().fold(f64::INFINITY, f64::min));
    out.report("max_response", values.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    out.report("zeros_rad_per_s", response_zeros(&k, 0.0, hi));
    if k.p() > 0 {
        out.report("extrema_rad_per_s", discriminator_extrema(&k, 0.0, hi)?);
    }
    Ok(CmdResult::ok(out))
}

struct BuiltModel {
    kernel: OperatorKernel,
    model: GaussianVectorModel,
    noise_power: f64,
    chf: ChfEvaluator,
    noise_chf: ChfEvaluator,
    variant: ChfVariant,
}

fn scenario(m: &ModelArgs) -> ToneScenario {
    ToneScenario { amplitude: m.amplitude, omega: m.omega, phase: m.phase, noise_c: m.noise_c, snr_db: m.snr_db }
}

fn build_model(m: &ModelArgs) -> Result<BuiltModel> {
    let kernel = kernel(&m.kernel)?;
    let sc = scenario(m);
    let full = sc.model(&kernel)?;
    let model = if m.noise_only { full.noise_only() } else { full };
    let variant = match m.variant {
        Variant::Real => ChfVariant::Real,
        Variant::Narrowband => ChfVariant::Narrowband,
    };
    let chf = ChfEvaluator::from_model(&model, kernel.matrix(), variant)?;
    let noise_chf = ChfEvaluator::from_model(&model.noise_only(), kernel.matrix(), variant)?;
    let noise_power = sc.noise()?.scale;
    Ok(BuiltModel { kernel, model, noise_power, chf, noise_chf, variant })
}

fn model_report(out: &mut Output, b: &BuiltModel) -> Result<()> {
    let d = decompose(&b.model, b.kernel.matrix())?;
    let cs = b.chf.cumulants(4);
    out.report("kernel", b.kernel.label());
    out.report("noise_power_n0", b.noise_power);
    out.report("eigenvalues", d.lambdas.clone());
    out.report("negative_eigenvalues", d.negative_count());
    for s in 1..=4 {
        out.report(&format!("kappa_{s}"), cs.kappa(s));
    }
    out.report("rho_3", cs.rho(3));
    out.report("rho_4", cs.rho(4));
    let noise_mean = b.noise_chf.mean();
    out.report("noise_mean", noise_mean);
    out.report("output_snr_db", output_snr_db(cs.mean(), noise_mean));
    Ok(())
}

fn draw(b: &BuiltModel, cfg: &McConfig) -> Result<QuadformSamples> {
    Ok(match b.variant {
        ChfVariant::Real => sample_quadform(&b.model, b.kernel.matrix(), cfg)?,
        ChfVariant::Narrowband => {
            let d = decompose(&b.model, b.kernel.matrix())?;
            sample_modes(&d.lambdas, &d.s, d.n0, 2, cfg)?
        }
    })
}

/// Monte Carlo comparison: histogram L1 against inverted cdf values at the
/// bin edges, and cumulant z-scores.
fn validate(out: &mut Output, b: &BuiltModel, common: &Common) -> Result<()> {
    let mc = draw(b, &mc_config(common))?;
    let edges = mc.histogram.edges.clone();
    let cdf = cdf_numeric(&edges, &b.chf)?;
    let l1 = l1_from_edge_cdf(&mc.histogram, &cdf);
    let exact = b.chf.cumulants(4);
    let z = mc.cumulants.z_scores(&exact.kappa[..4]);
    out.report("mc_samples", common.mc_samples);
    out.report("mc_l1", l1);
    for (i, v) in z.iter().enumerate() {
        out.report(&format!("mc_z_kappa_{}", i + 1), *v);
    }
    let worst = z.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    out.report("mc_max_abs_z", worst);
    Ok(())
}

fn l1_from_edge_cdf(h: &Histogram, cdf: &[f64]) -> f64 {
    let edges = h.edges.clone();
    h.l1_against_cdf(|x| {
        let i = edges.partition_point(|e| *e < x);
        cdf[i.min(cdf.len() - 1)]
    })
}

fn default_range(b: &BuiltModel) -> Result<(f64, f64)> {
    let cs = b.chf.cumulants(2);
    let sd = cs.variance().sqrt();
    let d = decompose(&b.model, b.kernel.matrix())?;
    let mut lo = cs.mean() - 8.0 * sd;
    let mut hi = cs.mean() + 8.0 * sd;
    if d.negative_count() == 0 {
        lo = lo.max(0.0);
    }
    if d.positive_count() == 0 {
        hi = hi.min(0.0);
    }
    Ok((lo / b.noise_power, hi / b.noise_power))
}

fn dist_grid(a: &DistArgs, b: &BuiltModel) -> Result<Vec<f64>> {
    let (lo, hi) = default_range(b)?;
    grid(a.v_min.unwrap_or(lo), a.v_max.unwrap_or(hi), a.points)
}

fn density_report(out: &mut Output, g: &DensityGrid) {
    out.report("mass_on_grid", g.total_mass());
    out.report("normalization_error", g.meta.normalization_error);
    out.report("clamp_magnitude", g.meta.clamp_magnitude);
    out.report("max_point_error", g.meta.max_point_error);
    out.report("converged", g.meta.converged);
    out.report("flagged", g.meta.flagged);
}

pub fn pdf(common: &Common, a: &DistArgs) -> Result<CmdResult> {
    let b = build_model(&a.model)?;
    let n0 = b.noise_power;
    let u = dist_grid(a, &b)?;
    let v: Vec<f64> = u.iter().map(|x| x * n0).collect();
    let g = pdf_numeric(&v, &b.chf);
    let mut out = Output::new("pdf", config(common, a));
    let mut t = Table::new("pdf", &["v_over_n0", "pdf_per_unit_v_over_n0"]);
    for (x, p) in u.iter().zip(&g.pdf) {
        t.push(vec![(*x).into(), (p * n0).into()]);
    }
    out.tables.push(t);
    model_report(&mut out, &b)?;
    density_report(&mut out, &g);
    if a.validate {
        validate(&mut out, &b, common)?;
    }
    let failure = (!g.meta.converged).then(|| {
        format!("density quadrature did not converge on every grid point (max point error {:e})", g.meta.max_point_error)
    });
    Ok(CmdResult { output: out, failure })
}

pub fn cdf(common: &Common, a: &DistArgs) -> Result<CmdResult> {
    let b = build_model(&a.model)?;
    let n0 = b.noise_power;
    let u = dist_grid(a, &b)?;
    let v: Vec<f64> = u.iter().map(|x| x * n0).collect();
    let c = cdf_numeric(&v, &b.chf)?;
    let mut out = Output::new("cdf", config(common, a));
    let mut t = Table::new("cdf", &["v_over_n0", "cdf"]);
    for (x, p) in u.iter().zip(&c) {
        t.push(vec![(*x).into(), (*p).into()]);
    }
    out.tables.push(t);
    model_report(&mut out, &b)?;
    if a.validate {
        validate(&mut out, &b, common)?;
    }
    Ok(CmdResult::ok(out))
}

pub fn cumulants(common: &Common, a: &CumulantArgs) -> Result<CmdResult> {
    if a.orders < 2 {
        bail!(TkoError::InvalidParameter(format!("--orders must be at least 2, got {}", a.orders)));
    }
    let b = build_model(&a.model)?;
    let cs = b.chf.cumulants(a.orders);
    let mut out = Output::new("cumulants", config(common, a));
    let mut t = Table::new("cumulants", &["order", "kappa", "rho"]);
    for s in 1..=a.orders {
        let rho = if s >= 3 { Cell::Num(cs.rho(s)) } else { Cell::Missing };
        t.push(vec![s.into(), cs.kappa(s).into(), rho]);
    }
    out.tables.push(t);
    let d = decompose(&b.model, b.kernel.matrix())?;
    let mut e = Table::new("modes", &["index", "lambda", "s"]);
    for (i, (l, s)) in d.lambdas.iter().zip(&d.s).enumerate() {
        e.push(vec![i.into(), (*l).into(), (*s).into()]);
    }
    out.tables.push(e);
    model_report(&mut out, &b)?;
    if a.validate {
        validate(&mut out, &b, common)?;
    }
    Ok(CmdResult::ok(out))
}

fn ratio_spec(a: &RatioArgs) -> Result<RatioSpec> {
    let k = kernel(&a.model.kernel)?;
    let spec = scenario(&a.model).if_squared_ratio(&k)?;
    let spec = if a.model.noise_only {
        RatioSpec::new(spec.j_num().clone(), spec.j_den().clone(), spec.model().noise_only())?
    } else {
        spec
    };
    Ok(match a.threshold {
        Some(t) => spec.with_threshold(t)?,
        None => spec,
    })
}

/// L1 between grid-cell masses of a density and a histogram on the same cells,
/// both normalized to the accepted draws.
fn cell_l1(g: &DensityGrid, h: &Histogram) -> f64 {
    let n = h.total() as f64;
    let widths: Vec<f64> = h.edges.windows(2).map(|w| w[1] - w[0]).collect();
    let model: Vec<f64> = g.pdf.iter().zip(&widths).map(|(p, w)| p * w).collect();
    let inside: f64 = model.iter().zip(&h.counts).map(|(m, &c)| (c as f64 / n - m).abs()).sum();
    let outside_model = (1.0 - model.iter().sum::<f64>()).max(0.0);
    inside + ((h.underflow + h.overflow) as f64 / n - outside_model).abs()
}

pub fn ratio(common: &Common, a: &RatioArgs) -> Result<CmdResult> {
    let spec = ratio_spec(a)?;
    let truth = a.model.omega * a.model.omega;
    let r = grid(a.r_min, a.r_max.unwrap_or(4.0 * truth), a.points)?;
    let method = match a.method {
        RatioMethod::Auto if a.threshold.is_some_and(|t| t > 0.0) => RatioMethod::Conditioned,
        RatioMethod::Auto => RatioMethod::Geary,
        m => m,
    };
    let p_neg = spec.negative_denominator_probability()?;
    let g = match method {
        RatioMethod::Geary => ratio_pdf_geary(&r, &spec)?,
        _ => ratio_pdf_conditioned(&r, &spec, &mc_config(common))?,
    };
    let mut out = Output::new("ratio", config(common, a));
    let mut t = Table::new("ratio_pdf", &["r_rad2_per_sample2", "pdf"]);
    for (x, p) in r.iter().zip(&g.pdf) {
        t.push(vec![(*x).into(), (*p).into()]);
    }
    out.tables.push(t);
    out.report("kernel", kernel(&a.model.kernel)?.label());
    out.report("method", if method == RatioMethod::Geary { "geary" } else { "conditioned" });
    out.report("omega_sq_truth", truth);
    out.report("p_denominator_nonpositive", p_neg);
    out.report("threshold", a.threshold);
    out.report("acceptance_rate", g.meta.acceptance_rate);
    out.report("median_on_grid", g.quantile(0.5));
    out.report("iqr_on_grid", g.iqr());
    density_report(&mut out, &g);
    if a.validate {
        let cfg = McConfig { bin_edges: Some(edges_around(&r)), ..mc_config(common) };
        let mc = sample_ratio(&spec, &cfg)?;
        out.report("mc_samples", common.mc_samples);
        out.report("mc_acceptance_rate", mc.acceptance_rate);
        out.report("mc_median", mc.quantile(0.5));
        out.report("mc_iqr", mc.iqr());
        out.report("mc_l1", cell_l1(&g, &mc.histogram));
    }
    let failure = (!g.meta.converged).then(|| {
        format!("ratio density did not meet its accuracy target (max point error {:e})", g.meta.max_point_error)
    });
    Ok(CmdResult { output: out, failure })
}

pub fn two_tone(common: &Common, a: &TwoToneArgs) -> Result<CmdResult> {
    let s = TwoToneSignal::new(a.a, a.f, a.theta0)?;
    let fast = a.f.max(1.0);
    let dt = a.dt.unwrap_or(1.0 / (256.0 * fast));
    if !(a.t1 > a.t0) {
        bail!(TkoError::InvalidParameter(format!("window [{}, {}] is empty", a.t0, a.t1)));
    }
    let n = ((a.t1 - a.t0) / dt).round().max(1.0) as usize;
    let mut out = Output::new("two-tone", config(common, a));
    let mut curves = Table::new("curves", &["t", "x", "dx", "psi", "m1", "m2", "y_r", "y_g"]);
    for i in 0..=n {
        let t = a.t0 + (a.t1 - a.t0) * i as f64 / n as f64;
        let d = s.evaluate(t);
        let (m1, m2) = s.component_curves(t);
        let (yr, yg) = if a.a > 0.0 { s.negativity_bounds(t) } else { (f64::NAN, f64::NAN) };
        curves.push(vec![t.into(), d.x.into(), d.dx.into(), d.psi().into(), m1.into(), m2.into(), yr.into(), yg.into()]);
    }
    out.tables.push(curves);
    let mut ex = Table::new("extrema", &["t", "kind", "x", "psi", "quadratic", "between_bounds", "negative"]);
    let mut negative = 0usize;
    let extrema = s.find_extrema(a.t0, a.t1)?;
    for e in &extrema {
        let c = s.negativity_check(e.t)?;
        let kind = match e.kind {
            ExtremumKind::Maximum => "max",
            ExtremumKind::Minimum => "min",
            ExtremumKind::Flat => "flat",
        };
        negative += usize::from(c.quadratic_negative);
        ex.push(vec![
            e.t.into(),
            kind.into(),
            s.evaluate(e.t).x.into(),
            c.psi.into(),
            c.quadratic.into(),
            c.between_bounds.into(),
            c.quadratic_negative.into(),
        ]);
    }
    out.tables.push(ex);
    let st = negative_excursion_stats(&s, a.t0, a.t1, dt)?;
    let mut iv = Table::new("negative_intervals", &["start", "end", "duration"]);
    for (lo, hi) in &st.intervals {
        iv.push(vec![(*lo).into(), (*hi).into(), (hi - lo).into()]);
    }
    out.tables.push(iv);
    out.report("extrema", extrema.len());
    out.report("negative_extrema", negative);
    out.report("negative_intervals", st.intervals.len());
    out.report("zero_crossing_rate", st.zero_crossing_rate);
    out.report("mean_negative_duration", if st.intervals.is_empty() { None } else { Some(st.mean_negative_duration) });
    Ok(CmdResult::ok(out))
}

fn read_samples(path: &std::path::Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let field = line.split(',').next().unwrap_or("").trim();
        if field.is_empty() {
            continue;
        }
        match field.parse::<f64>() {
            Ok(v) => out.push(v),
            Err(_) if i == 0 => {} // header
            Err(_) => bail!(TkoError::InvalidParameter(format!("{}:{}: not a number: {field:?}", path.display(), i + 1))),
        }
    }
    Ok(out)
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(v[v.len() / 2])
}

pub fn esa(common: &Common, a: &EsaArgs) -> Result<CmdResult> {
    let k = kernel(&a.kernel)?;
    let x = match &a.input {
        Some(p) => read_samples(p)?,
        None => {
            let tone = SignalSpec::tone(a.amplitude, a.omega, 0.0);
            let mut x: Vec<f64> = (0..a.samples).map(|n| tone.value(n as f64)).collect();
            if let Some(snr) = a.snr_db {
                // R(k samples) = N0 exp(-c k²) becomes exp(-c fs² τ²) in seconds
                let noise = CovarianceKernel::new(a.noise_c * a.fs * a.fs, noise_scale_for_snr(tone.power(), snr))?;
                let (path, _) = sample_noise_path_stream(&noise, a.samples as f64 / a.fs, a.fs, common.seed, 0)?;
                for (v, e) in x.iter_mut().zip(&path.samples) {
                    *v += e;
                }
            }
            x
        }
    };
    let signal = SampledSignal::new(x, a.fs)?;
    let raw = esa_demodulate_with(&signal, &k, 0.0, a.refine)?;
    let threshold = match a.threshold.trim() {
        "auto" => 0.1 * median(raw.psi_x.clone()).unwrap_or(0.0),
        s => s
            .parse::<f64>()
            .map_err(|_| TkoError::InvalidParameter(format!("--threshold must be a number or `auto`, got {s:?}")))?,
    };
    let unfiltered = esa_demodulate_with(&signal, &k, threshold, a.refine)?;
    let est: EsaEstimate = if a.filter { unfiltered.post_filtered(threshold)? } else { unfiltered.clone() };
    let mut out = Output::new("esa", config(common, a));
    let mut t = Table::new("estimates", &["n", "t_s", "x", "psi_x", "psi_dx", "omega_sq_rad2_per_s2", "amp_sq", "valid"]);
    for i in 0..est.len() {
        let n = est.offset + i;
        t.push(vec![
            n.into(),
            (n as f64 / a.fs).into(),
            signal.samples[n].into(),
            est.psi_x[i].into(),
            est.psi_dx[i].into(),
            est.omega_sq[i].into(),
            est.amp_sq[i].into(),
            est.valid_mask[i].into(),
        ]);
    }
    out.tables.push(t);
    let filtered_psi = tko_core::binomial_filter(&unfiltered.psi_x)?;
    let (before, after) = positivity_report(&unfiltered.psi_x, &filtered_psi);
    out.report("kernel", k.label());
    out.report("samples", signal.len());
    out.report("threshold", threshold);
    out.report("filtered", a.filter);
    out.report("masked_fraction", est.masked_fraction());
    out.report("median_omega_sq", median(est.valid_omega_sq()));
    out.report("median_amp_sq", median(est.valid_amp_sq()));
    if a.input.is_none() {
        out.report("omega_sq_truth", (a.omega * a.fs).powi(2));
        out.report("amp_sq_truth", a.amplitude * a.amplitude);
    }
    out.report("negative_fraction_psi_x", before);
    out.report("negative_fraction_psi_x_filtered", after);
    Ok(CmdResult::ok(out))
}
