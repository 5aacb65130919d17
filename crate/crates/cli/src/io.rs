//! On-disk formats: self-describing delimited tables for plot tools, a
//! compact bincode container for bulk record sets, and the run manifest
//! that makes outputs reproducible byte-for-byte.
//!
//! Floats are written with Rust's shortest round-trip formatting, so
//! `parse(format(x)) == x` bit-exactly and identical runs produce identical
//! files.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use weakmeas::model::{MeasurementRecord, TomographyOutcome, TrueStateTrace};
use weakmeas::tomography::ReconstructedTrajectory;
use weakmeas::{
    CalibrationReport64, ComparisonReport64, CorrelationTable64, EnsembleDataset64,
    MeasurementRecord64, Quadrature, TomographyAxis, TrajectoryEstimate64,
};

use crate::config::{FileFormat, RunConfig};

pub const MANIFEST_NAME: &str = "manifest.json";

/// Run manifest: everything needed to reproduce the files next to it.
/// Deliberately contains no timestamps or host information.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub repetitions: usize,
    pub format: FileFormat,
    pub files: Vec<String>,
    /// Full TOML text of the run configuration.
    pub config_toml: String,
}

impl Manifest {
    pub fn new(config: &RunConfig, files: Vec<String>) -> Self {
        Self {
            format_version: 1,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config.hash(),
            seed: config.run.seed,
            repetitions: config.plan.repetitions,
            format: config.run.format,
            files,
            config_toml: config.to_toml(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_NAME);
        let text = serde_json::to_string_pretty(self)?;
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_NAME);
        let text =
            fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn run_config(&self) -> Result<RunConfig> {
        let config = RunConfig::from_toml(&self.config_toml)?;
        if config.hash() != self.config_hash {
            bail!("manifest config hash mismatch; files were tampered with or mixed");
        }
        Ok(config)
    }
}

pub fn axis_letter(axis: TomographyAxis) -> &'static str {
    match axis {
        TomographyAxis::X => "x",
        TomographyAxis::Y => "y",
        TomographyAxis::Z => "z",
    }
}

fn parse_axis(s: &str) -> Result<TomographyAxis> {
    match s {
        "x" => Ok(TomographyAxis::X),
        "y" => Ok(TomographyAxis::Y),
        "z" => Ok(TomographyAxis::Z),
        other => bail!("unknown axis {other:?}"),
    }
}

pub fn quadrature_name(q: Quadrature) -> &'static str {
    match q {
        Quadrature::Z => "z",
        Quadrature::Phi => "phi",
    }
}

fn writer(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| {
        format!("creating {}", path.display())
    })?))
}

/// Write the standard comment preamble shared by all tables.
fn preamble(w: &mut impl Write, kind: &str, config: &RunConfig, columns: &str) -> Result<()> {
    writeln!(w, "# weakmeas {kind} v1")?;
    writeln!(w, "# config_hash: {}", config.hash())?;
    writeln!(w, "# seed: {}", config.run.seed)?;
    writeln!(
        w,
        "# quadrature: {}",
        quadrature_name(config.measurement.quadrature)
    )?;
    writeln!(w, "# step_s: {}", config.measurement.step_ns * 1e-9)?;
    writeln!(w, "# delta_v: {} (arbitrary units)", config.measurement.delta_v)?;
    writeln!(w, "{columns}")?;
    Ok(())
}

// ---------------------------------------------------------------- records

const RECORD_COLUMNS: &str = "rep,record_seed,k,t_s,v_inst,v_m";

/// Streaming writer for the delimited tables; rows are appended repetition
/// by repetition so large runs never hold their output in memory.
pub struct TableWriter {
    w: BufWriter<File>,
    quadrature: Quadrature,
    step: f64,
}

impl TableWriter {
    fn start(path: &Path, kind: &str, config: &RunConfig, columns: &str) -> Result<Self> {
        let mut w = writer(path)?;
        preamble(&mut w, kind, config, columns)?;
        Ok(Self {
            w,
            quadrature: config.measurement.quadrature,
            step: config.measurement.step_ns * 1e-9,
        })
    }

    pub fn records(path: &Path, config: &RunConfig) -> Result<Self> {
        Self::start(path, "records", config, RECORD_COLUMNS)
    }

    pub fn outcomes(path: &Path, config: &RunConfig) -> Result<Self> {
        Self::start(path, "outcomes", config, OUTCOME_COLUMNS)
    }

    pub fn traces(path: &Path, config: &RunConfig) -> Result<Self> {
        let columns = match config.measurement.quadrature {
            Quadrature::Z => "rep,k,t_s,x,y,z,y_m,phase_env,eigenstate",
            Quadrature::Phi => "rep,k,t_s,x,y,z,phase_det,phase_und,phase_env",
        };
        Self::start(path, "traces", config, columns)
    }

    pub fn record_rows(&mut self, rep: usize, record: &MeasurementRecord64) -> Result<()> {
        for k in 0..record.len() {
            writeln!(
                self.w,
                "{rep},{},{k},{},{},{}",
                record.seed(),
                record.time(k),
                record.instantaneous()[k],
                record.integrated()[k],
            )?;
        }
        Ok(())
    }

    pub fn outcome_row(&mut self, rep: usize, o: &TomographyOutcome<f64>) -> Result<()> {
        writeln!(
            self.w,
            "{rep},{},{},{}",
            axis_letter(o.axis),
            o.result,
            o.measure_duration
        )?;
        Ok(())
    }

    pub fn trace_rows(&mut self, rep: usize, trace: &TrueStateTrace<f64>) -> Result<()> {
        for (k, state) in trace.bloch.iter().enumerate() {
            let t = (k + 1) as f64 * self.step;
            match self.quadrature {
                Quadrature::Z => {
                    let label = trace
                        .eigenstate
                        .map(|e| e.sign::<f64>() as i8)
                        .unwrap_or(0);
                    writeln!(
                        self.w,
                        "{rep},{k},{t},{},{},{},{},{},{label}",
                        state.x(),
                        state.y(),
                        state.z(),
                        trace.full_integrated[k],
                        trace.phase_environment[k],
                    )?;
                }
                Quadrature::Phi => {
                    writeln!(
                        self.w,
                        "{rep},{k},{t},{},{},{},{},{},{}",
                        state.x(),
                        state.y(),
                        state.z(),
                        trace.phase_detected[k],
                        trace.phase_undetected[k],
                        trace.phase_environment[k],
                    )?;
                }
            }
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.w.flush()?;
        Ok(())
    }
}

pub fn write_records_csv(
    path: &Path,
    config: &RunConfig,
    records: impl Iterator<Item = MeasurementRecord64>,
) -> Result<()> {
    let mut w = TableWriter::records(path, config)?;
    for (rep, record) in records.enumerate() {
        w.record_rows(rep, &record)?;
    }
    w.finish()
}

/// Read records back from the CSV schema written by [`write_records_csv`].
/// The running-mean invariant is re-checked on load.
pub fn read_records_csv(
    path: &Path,
    quadrature: Quadrature,
    step: f64,
) -> Result<Vec<MeasurementRecord64>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut records = Vec::new();
    let mut current_rep: Option<usize> = None;
    let mut seed = 0u64;
    let mut inst = Vec::new();
    let mut integ = Vec::new();

    let mut finish = |seed: u64, inst: &mut Vec<f64>, integ: &mut Vec<f64>| -> Result<()> {
        let record = MeasurementRecord::from_series(
            seed,
            quadrature,
            step,
            std::mem::take(inst),
            std::mem::take(integ),
        )?;
        records.push(record);
        Ok(())
    };

    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("rep,") {
            continue;
        }
        let mut fields = line.split(',');
        let mut next = |name: &str| -> Result<&str> {
            fields
                .next()
                .with_context(|| format!("line {}: missing column {name}", lineno + 1))
        };
        let rep: usize = next("rep")?.parse()?;
        let record_seed: u64 = next("record_seed")?.parse()?;
        let _k: usize = next("k")?.parse()?;
        let _t: f64 = next("t_s")?.parse()?;
        let v_inst: f64 = next("v_inst")?.parse()?;
        let v_m: f64 = next("v_m")?.parse()?;

        match current_rep {
            Some(r) if r == rep => {}
            Some(_) => finish(seed, &mut inst, &mut integ)?,
            None => {}
        }
        current_rep = Some(rep);
        seed = record_seed;
        inst.push(v_inst);
        integ.push(v_m);
    }
    if current_rep.is_some() {
        finish(seed, &mut inst, &mut integ)?;
    }
    Ok(records)
}

/// Compact container for bulk record sets; logically identical to the CSV.
#[derive(Debug, Serialize, Deserialize)]
pub struct RecordsBin {
    pub config_hash: String,
    pub records: Vec<MeasurementRecord64>,
}

pub fn write_records_bin(path: &Path, config: &RunConfig, records: Vec<MeasurementRecord64>) -> Result<()> {
    let container = RecordsBin {
        config_hash: config.hash(),
        records,
    };
    let mut w = writer(path)?;
    bincode::serialize_into(&mut w, &container)?;
    w.flush()?;
    Ok(())
}

pub fn read_records_bin(path: &Path) -> Result<RecordsBin> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(bincode::deserialize_from(BufReader::new(file))?)
}

/// Streaming counterpart of [`write_records_bin`]: emits the same bincode
/// layout (length-prefixed hash, u64 record count, records) without holding
/// the records in memory; the count is patched in on `finish`.
pub struct RecordsBinWriter {
    w: BufWriter<File>,
    count_pos: u64,
    count: u64,
}

impl RecordsBinWriter {
    pub fn create(path: &Path, config: &RunConfig) -> Result<Self> {
        let mut w = writer(path)?;
        let hash = config.hash();
        w.write_all(&(hash.len() as u64).to_le_bytes())?;
        w.write_all(hash.as_bytes())?;
        let count_pos = (8 + hash.len()) as u64;
        w.write_all(&0u64.to_le_bytes())?;
        Ok(Self {
            w,
            count_pos,
            count: 0,
        })
    }

    pub fn push(&mut self, record: &MeasurementRecord64) -> Result<()> {
        bincode::serialize_into(&mut self.w, record)?;
        self.count += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        use std::io::{Seek, SeekFrom};
        self.w.flush()?;
        let mut file = self.w.into_inner()?;
        file.seek(SeekFrom::Start(self.count_pos))?;
        file.write_all(&self.count.to_le_bytes())?;
        Ok(())
    }
}

// --------------------------------------------------------------- outcomes

const OUTCOME_COLUMNS: &str = "rep,axis,result,duration_s";

pub fn write_outcomes_csv<'a>(
    path: &Path,
    config: &RunConfig,
    outcomes: impl Iterator<Item = &'a TomographyOutcome<f64>>,
) -> Result<()> {
    let mut w = TableWriter::outcomes(path, config)?;
    for (rep, o) in outcomes.enumerate() {
        w.outcome_row(rep, o)?;
    }
    w.finish()
}

pub fn read_outcomes_csv(path: &Path) -> Result<Vec<TomographyOutcome<f64>>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut outcomes = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("rep,") {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            bail!("line {}: expected 4 outcome columns", lineno + 1);
        }
        let axis = parse_axis(fields[1])?;
        let result: i8 = fields[2].parse()?;
        let duration: f64 = fields[3].parse()?;
        outcomes.push(TomographyOutcome::new(axis, result, duration)?);
    }
    Ok(outcomes)
}

// ----------------------------------------------------------------- traces

pub fn write_traces_csv(
    path: &Path,
    config: &RunConfig,
    traces: impl Iterator<Item = TrueStateTrace<f64>>,
) -> Result<()> {
    let mut w = TableWriter::traces(path, config)?;
    for (rep, trace) in traces.enumerate() {
        w.trace_rows(rep, &trace)?;
    }
    w.finish()
}

// ------------------------------------------------------------ trajectories

const TRAJECTORY_COLUMNS: &str = "rep,tau_s,x,y,z,purity,v_m";

/// One trajectory table row per time point; the τ = 0 row has no record
/// value, written as an empty field.
pub fn write_trajectories_csv<'a>(
    path: &Path,
    config: &RunConfig,
    trajectories: impl Iterator<Item = (usize, &'a TrajectoryEstimate64, &'a MeasurementRecord64)>,
) -> Result<()> {
    let mut w = writer(path)?;
    preamble(&mut w, "trajectories", config, TRAJECTORY_COLUMNS)?;
    for (rep, traj, record) in trajectories {
        for (k, state) in traj.bloch.iter().enumerate() {
            let v_m = if k == 0 {
                String::new()
            } else {
                format!("{}", record.integrated()[k - 1])
            };
            writeln!(
                w,
                "{rep},{},{},{},{},{},{v_m}",
                traj.times[k],
                state.x(),
                state.y(),
                state.z(),
                traj.purity[k],
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

// ----------------------------------------------------------- reconstruction

const RECONSTRUCTION_COLUMNS: &str =
    "tau_s,target_v,epsilon,count_x,count_y,count_z,x,x_se,y,y_se,z,z_se,ok";

pub fn write_reconstruction_csv(
    path: &Path,
    config: &RunConfig,
    recon: &ReconstructedTrajectory<f64>,
) -> Result<()> {
    let mut w = writer(path)?;
    preamble(&mut w, "reconstruction", config, RECONSTRUCTION_COLUMNS)?;
    writeln!(w, "# reference_seed: {}", recon.reference_seed)?;
    writeln!(w, "# min_count: {}", recon.min_count)?;
    for p in &recon.points {
        let axis_stat = |idx: usize| -> String {
            match &p.estimate {
                Some(e) => format!("{},{}", e.by_axis[idx].mean, e.by_axis[idx].std_err),
                None => ",".to_string(),
            }
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            p.tau,
            p.target_v,
            p.epsilon,
            p.counts[0],
            p.counts[1],
            p.counts[2],
            axis_stat(0),
            axis_stat(1),
            axis_stat(2),
            if p.ok { 1 } else { 0 },
        )?;
    }
    w.flush()?;
    Ok(())
}

// -------------------------------------------------------------- correlation

const CORRELATION_COLUMNS: &str =
    "v_center,count_x,count_y,count_z,x,x_se,y,y_se,z,z_se,theory_x,theory_y,theory_z";

pub fn write_correlation_csv(
    path: &Path,
    config: &RunConfig,
    table: &CorrelationTable64,
) -> Result<()> {
    let mut w = writer(path)?;
    preamble(&mut w, "correlation", config, CORRELATION_COLUMNS)?;
    writeln!(w, "# tau_s: {}", table.tau)?;
    writeln!(w, "# strength: {}", table.s)?;
    writeln!(w, "# gamma_per_s: {}", table.gamma)?;
    for bin in &table.bins {
        let stat = |idx: usize| match &bin.empirical[idx] {
            Some(e) => format!("{},{}", e.mean, e.std_err),
            None => ",".to_string(),
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            bin.center,
            bin.counts[0],
            bin.counts[1],
            bin.counts[2],
            stat(0),
            stat(1),
            stat(2),
            bin.theory.x(),
            bin.theory.y(),
            bin.theory.z(),
        )?;
    }
    w.flush()?;
    Ok(())
}

// -------------------------------------------------------------- calibration

pub fn write_calibration_toml(
    path: &Path,
    config: &RunConfig,
    tau: f64,
    report: &CalibrationReport64,
    identity_lhs: f64,
    identity_rhs: f64,
) -> Result<()> {
    let mut w = writer(path)?;
    writeln!(w, "# weakmeas calibration v1")?;
    writeln!(w, "# config_hash: {}", config.hash())?;
    writeln!(w, "tau_s = {}", tau)?;
    writeln!(w, "strength = {}", report.s)?;
    writeln!(w, "gamma_per_s = {}", report.gamma)?;
    writeln!(w, "sigma = {}", report.sigma)?;
    writeln!(w, "phase_per_photon_rad = {}", report.phase_per_photon)?;
    writeln!(w)?;
    writeln!(w, "# gamma*tau must equal S(1-eta)/(8 eta) + tau/T2*")?;
    writeln!(w, "[identity]")?;
    writeln!(w, "gamma_tau = {identity_lhs}")?;
    writeln!(w, "strength_route = {identity_rhs}")?;
    writeln!(w, "abs_difference = {}", (identity_lhs - identity_rhs).abs())?;
    w.flush()?;
    Ok(())
}

// ------------------------------------------------------------------ report

#[derive(Debug, Serialize)]
pub struct ComparisonFile<'a> {
    pub reference_seed: u64,
    pub min_count: usize,
    pub points_total: usize,
    pub points_ok: usize,
    pub report: &'a ComparisonReport64,
}

pub fn write_comparison_json(path: &Path, file: &ComparisonFile) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(file)?)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

// ----------------------------------------------------------------- dataset

/// A dataset directory loaded back into memory.
pub struct LoadedDataset {
    pub manifest: Manifest,
    pub config: RunConfig,
    pub dataset: EnsembleDataset64,
}

pub fn dataset_paths(dir: &Path, format: FileFormat) -> (PathBuf, PathBuf, PathBuf) {
    let records = match format {
        FileFormat::Csv => dir.join("records.csv"),
        FileFormat::Bin => dir.join("records.bin"),
    };
    (records, dir.join("outcomes.csv"), dir.join("traces.csv"))
}

pub fn load_dataset(dir: &Path) -> Result<LoadedDataset> {
    let manifest = Manifest::read(dir)?;
    let config = manifest.run_config()?;
    let params = config.physical_params()?;
    let meas = config.measurement_config()?;
    let (records_path, outcomes_path, _) = dataset_paths(dir, manifest.format);

    let records = match manifest.format {
        FileFormat::Csv => read_records_csv(&records_path, meas.quadrature, meas.step)?,
        FileFormat::Bin => {
            let bin = read_records_bin(&records_path)?;
            if bin.config_hash != manifest.config_hash {
                bail!("records.bin hash does not match the manifest");
            }
            bin.records
        }
    };
    let outcomes = read_outcomes_csv(&outcomes_path)?;
    if records.len() != outcomes.len() {
        bail!(
            "dataset is inconsistent: {} records vs {} outcomes",
            records.len(),
            outcomes.len()
        );
    }
    let entries = records.into_iter().zip(outcomes).collect();
    let dataset = EnsembleDataset64::new(params, meas, entries)?;
    Ok(LoadedDataset {
        manifest,
        config,
        dataset,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;
    use weakmeas::simulator::{run_experiment, simulate_z_record};

    fn small_run(reps: usize) -> (RunConfig, EnsembleDataset64) {
        let mut config = RunConfig::default();
        config.plan.repetitions = reps;
        config.measurement.duration_us = 0.128;
        config.run.seed = 5;
        let params = config.physical_params().unwrap();
        let meas = config.measurement_config().unwrap();
        let plan = config.experiment_plan(&meas).unwrap();
        let ds = run_experiment(&plan, &params, &meas, config.run.seed).unwrap();
        (config, ds)
    }

    #[test]
    fn records_csv_round_trip() {
        let (config, ds) = small_run(12);
        let dir = tempdir().unwrap();
        let path = dir.path().join("records.csv");
        write_records_csv(
            &path,
            &config,
            ds.entries().iter().map(|(r, _)| r.clone()),
        )
        .unwrap();
        let meas = config.measurement_config().unwrap();
        let back = read_records_csv(&path, meas.quadrature, meas.step).unwrap();
        assert_eq!(back.len(), ds.len());
        for ((orig, _), loaded) in ds.entries().iter().zip(&back) {
            assert_eq!(orig, loaded);
        }
    }

    #[test]
    fn records_bin_round_trip() {
        let (config, ds) = small_run(7);
        let dir = tempdir().unwrap();
        let path = dir.path().join("records.bin");
        let records: Vec<_> = ds.entries().iter().map(|(r, _)| r.clone()).collect();
        write_records_bin(&path, &config, records.clone()).unwrap();
        let back = read_records_bin(&path).unwrap();
        assert_eq!(back.config_hash, config.hash());
        assert_eq!(back.records, records);
    }

    #[test]
    fn streaming_bin_writer_matches_the_one_shot_layout() {
        let (config, ds) = small_run(6);
        let records: Vec<_> = ds.entries().iter().map(|(r, _)| r.clone()).collect();
        let dir = tempdir().unwrap();
        let one_shot = dir.path().join("a.bin");
        let streamed = dir.path().join("b.bin");
        write_records_bin(&one_shot, &config, records.clone()).unwrap();
        let mut w = RecordsBinWriter::create(&streamed, &config).unwrap();
        for r in &records {
            w.push(r).unwrap();
        }
        w.finish().unwrap();
        assert_eq!(fs::read(&one_shot).unwrap(), fs::read(&streamed).unwrap());
        let back = read_records_bin(&streamed).unwrap();
        assert_eq!(back.records, records);
    }

    #[test]
    fn outcomes_round_trip() {
        let (config, ds) = small_run(9);
        let dir = tempdir().unwrap();
        let path = dir.path().join("outcomes.csv");
        write_outcomes_csv(&path, &config, ds.entries().iter().map(|(_, o)| o)).unwrap();
        let back = read_outcomes_csv(&path).unwrap();
        let orig: Vec<_> = ds.entries().iter().map(|(_, o)| *o).collect();
        assert_eq!(back, orig);
    }

    #[test]
    fn manifest_round_trip_validates_hash() {
        let (config, _) = small_run(3);
        let dir = tempdir().unwrap();
        let manifest = Manifest::new(&config, vec!["records.csv".into()]);
        manifest.write(dir.path()).unwrap();
        let back = Manifest::read(dir.path()).unwrap();
        assert_eq!(back, manifest);
        assert_eq!(back.run_config().unwrap(), config);
    }

    #[test]
    fn traces_csv_has_expected_row_count() {
        let mut config = RunConfig::default();
        config.measurement.duration_us = 0.064;
        let params = config.physical_params().unwrap();
        let meas = config.measurement_config().unwrap();
        let traces: Vec<_> = (0..3)
            .map(|seed| simulate_z_record(&params, &meas, seed).unwrap().1)
            .collect();
        let dir = tempdir().unwrap();
        let path = dir.path().join("traces.csv");
        write_traces_csv(&path, &config, traces.into_iter()).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let data_rows = text
            .lines()
            .filter(|l| !l.starts_with('#') && !l.starts_with("rep,") && !l.is_empty())
            .count();
        assert_eq!(data_rows, 3 * 4);
    }
}
