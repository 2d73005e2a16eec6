//! Trajectory ingestion, snapshot-matrix assembly and delay embedding.
//!
//! CSV layout: optional `# key=value` metadata lines, then a header with a
//! `t` column, state columns `x1..xN`, and optional `u1..uM` / `d1..dK`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{KoopmanError, Result};
use crate::numerics::{format_float, RealMatrix, DEFAULT_RTOL};

/// Maximum relative deviation of a time step from the first one.
pub const TIME_JITTER_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t0: f64,
    pub dt: f64,
    pub states: Vec<Vec<f64>>,
    pub inputs: Option<Vec<Vec<f64>>>,
    pub disturbances: Option<Vec<Vec<f64>>>,
    /// Free-form `key=value` notes such as generator seeds.
    pub metadata: BTreeMap<String, String>,
}

fn uniform_dim(rows: &[Vec<f64>], what: &str) -> Result<usize> {
    let dim = rows.first().map_or(0, Vec::len);
    if dim == 0 {
        return Err(KoopmanError::shape(format!("{what} vectors are empty")));
    }
    if let Some(k) = rows.iter().position(|r| r.len() != dim) {
        return Err(KoopmanError::shape(format!(
            "{what} row {k} has {} entries, expected {dim}",
            rows[k].len()
        )));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(KoopmanError::Numerical(format!(
            "{what} contain non-finite values"
        )));
    }
    Ok(dim)
}

impl Trajectory {
    pub fn new(
        dt: f64,
        states: Vec<Vec<f64>>,
        inputs: Option<Vec<Vec<f64>>>,
        disturbances: Option<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let traj = Trajectory {
            t0: 0.0,
            dt,
            states,
            inputs,
            disturbances,
            metadata: BTreeMap::new(),
        };
        traj.validate()?;
        Ok(traj)
    }

    /// Autonomous trajectory with unit sampling step.
    pub fn from_states(states: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(1.0, states, None, None)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(KoopmanError::Parameter(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        let n = self.states.len();
        if n < 2 {
            return Err(KoopmanError::shape(format!(
                "trajectory needs at least 2 samples, got {n}"
            )));
        }
        uniform_dim(&self.states, "states")?;
        for (what, field) in [
            ("inputs", &self.inputs),
            ("disturbances", &self.disturbances),
        ] {
            if let Some(rows) = field {
                if rows.len() != n {
                    return Err(KoopmanError::shape(format!(
                        "{what} have {} samples, states have {n}",
                        rows.len()
                    )));
                }
                uniform_dim(rows, what)?;
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.as_ref().map_or(0, |u| u[0].len())
    }

    pub fn disturbance_dim(&self) -> usize {
        self.disturbances.as_ref().map_or(0, |d| d[0].len())
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.metadata {
            let _ = writeln!(out, "# {k}={v}");
        }
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.state_dim()).map(|i| format!("x{i}")));
        header.extend((1..=self.input_dim()).map(|i| format!("u{i}")));
        header.extend((1..=self.disturbance_dim()).map(|i| format!("d{i}")));
        out.push_str(&header.join(","));
        out.push('\n');
        for k in 0..self.len() {
            let t = self.t0 + k as f64 * self.dt;
            let mut row = vec![format_float(t)];
            row.extend(self.states[k].iter().map(|&v| format_float(v)));
            if let Some(u) = &self.inputs {
                row.extend(u[k].iter().map(|&v| format_float(v)));
            }
            if let Some(d) = &self.disturbances {
                row.extend(d[k].iter().map(|&v| format_float(v)));
            }
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

pub fn save_trajectory(traj: &Trajectory, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, traj.to_csv_string())?;
    Ok(())
}

pub fn load_trajectory(path: impl AsRef<Path>) -> Result<Trajectory> {
    let text = std::fs::read_to_string(path)?;
    parse_trajectory(&text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ColumnKind {
    Time,
    State,
    Input,
    Disturbance,
}

/// Header-classified numeric table shared by trajectory and initial-condition files.
#[derive(Debug, Clone)]
pub(crate) struct CsvTable {
    pub metadata: BTreeMap<String, String>,
    pub time: Option<Vec<f64>>,
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    pub disturbances: Vec<Vec<f64>>,
    /// 1-based file line of each data row.
    pub lines: Vec<usize>,
}

fn classify(name: &str, line: usize) -> Result<(ColumnKind, usize)> {
    if name == "t" {
        return Ok((ColumnKind::Time, 0));
    }
    let (kind, rest) = match name.split_at_checked(1) {
        Some(("x", rest)) => (ColumnKind::State, rest),
        Some(("u", rest)) => (ColumnKind::Input, rest),
        Some(("d", rest)) => (ColumnKind::Disturbance, rest),
        _ => {
            return Err(KoopmanError::parse(
                line,
                format!("unrecognized column `{name}`"),
            ))
        }
    };
    match rest.parse::<usize>() {
        Ok(i) if i >= 1 => Ok((kind, i)),
        _ => Err(KoopmanError::parse(
            line,
            format!("unrecognized column `{name}`"),
        )),
    }
}

pub(crate) fn parse_table(text: &str) -> Result<CsvTable> {
    let mut metadata = BTreeMap::new();
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));

    let (header_line, header) = loop {
        match lines.next() {
            None => return Err(KoopmanError::parse(1, "missing header row")),
            Some((_, "")) => continue,
            Some((n, l)) if l.starts_with('#') => {
                if let Some((k, v)) = l.trim_start_matches('#').trim().split_once('=') {
                    metadata.insert(k.trim().to_string(), v.trim().to_string());
                }
                let _ = n;
            }
            Some((n, l)) => break (n, l),
        }
    };

    let columns: Vec<(ColumnKind, usize)> = header
        .split(',')
        .map(|name| classify(name.trim(), header_line))
        .collect::<Result<_>>()?;

    // each family must be numbered 1..=count without gaps or repeats
    let mut placement = vec![0usize; columns.len()];
    let mut counts = BTreeMap::new();
    for kind in [
        ColumnKind::Time,
        ColumnKind::State,
        ColumnKind::Input,
        ColumnKind::Disturbance,
    ] {
        let mut idx: Vec<usize> = columns
            .iter()
            .filter(|c| c.0 == kind)
            .map(|c| c.1)
            .collect();
        let count = idx.len();
        idx.sort_unstable();
        let expected: Vec<usize> = if kind == ColumnKind::Time {
            vec![0; count.min(1)]
        } else {
            (1..=count).collect()
        };
        if idx != expected {
            return Err(KoopmanError::parse(
                header_line,
                format!("{kind:?} columns must be numbered 1..{count} exactly once"),
            ));
        }
        counts.insert(kind as u8, count);
    }
    for (pos, (_, i)) in columns.iter().enumerate() {
        placement[pos] = i.saturating_sub(1);
    }
    let n_state = counts[&(ColumnKind::State as u8)];
    let n_input = counts[&(ColumnKind::Input as u8)];
    let n_dist = counts[&(ColumnKind::Disturbance as u8)];
    let has_time = counts[&(ColumnKind::Time as u8)] == 1;
    if n_state == 0 {
        return Err(KoopmanError::parse(
            header_line,
            "no state columns (x1..xN)",
        ));
    }

    let mut table = CsvTable {
        metadata,
        time: has_time.then(Vec::new),
        states: vec![],
        inputs: vec![],
        disturbances: vec![],
        lines: vec![],
    };
    for (n, line) in lines {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != columns.len() {
            return Err(KoopmanError::parse(
                n,
                format!("expected {} cells, found {}", columns.len(), cells.len()),
            ));
        }
        let mut x = vec![0.0; n_state];
        let mut u = vec![0.0; n_input];
        let mut d = vec![0.0; n_dist];
        for (pos, cell) in cells.iter().enumerate() {
            let cell = cell.trim();
            let v: f64 = cell
                .parse()
                .map_err(|_| KoopmanError::parse(n, format!("non-numeric cell `{cell}`")))?;
            if !v.is_finite() {
                return Err(KoopmanError::parse(n, format!("non-finite cell `{cell}`")));
            }
            match columns[pos].0 {
                ColumnKind::Time => table.time.as_mut().expect("time column").push(v),
                ColumnKind::State => x[placement[pos]] = v,
                ColumnKind::Input => u[placement[pos]] = v,
                ColumnKind::Disturbance => d[placement[pos]] = v,
            }
        }
        table.states.push(x);
        if n_input > 0 {
            table.inputs.push(u);
        }
        if n_dist > 0 {
            table.disturbances.push(d);
        }
        table.lines.push(n);
    }
    Ok(table)
}

/// Parse trajectory CSV text. `dt` is the first time difference; every
/// later difference must agree with it to [`TIME_JITTER_RTOL`].
pub fn parse_trajectory(text: &str) -> Result<Trajectory> {
    let table = parse_table(text)?;
    let time = table
        .time
        .ok_or_else(|| KoopmanError::parse(1, "missing required `t` column"))?;
    if time.len() < 2 {
        let line = table.lines.last().copied().unwrap_or(1);
        return Err(KoopmanError::parse(
            line,
            "trajectory needs at least 2 data rows",
        ));
    }
    let dt = time[1] - time[0];
    if !(dt > 0.0) {
        return Err(KoopmanError::parse(
            table.lines[1],
            "time stamps must increase",
        ));
    }
    for k in 1..time.len() {
        let step = time[k] - time[k - 1];
        if (step - dt).abs() > TIME_JITTER_RTOL * dt.abs() {
            return Err(KoopmanError::parse(
                table.lines[k],
                format!("non-uniform time step {step} (expected {dt})"),
            ));
        }
    }
    let traj = Trajectory {
        t0: time[0],
        dt,
        states: table.states,
        inputs: (!table.inputs.is_empty()).then_some(table.inputs),
        disturbances: (!table.disturbances.is_empty()).then_some(table.disturbances),
        metadata: table.metadata,
    };
    traj.validate()?;
    Ok(traj)
}

/// Column origin inside the source data: which file/trajectory and which step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeIndex {
    pub segment: usize,
    pub step: usize,
}

/// Aligned snapshot matrices: column `j` of `xp` is one step after column `j` of `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotPair {
    pub x: RealMatrix,
    pub xp: RealMatrix,
    pub col_times: Vec<TimeIndex>,
}

impl SnapshotPair {
    pub fn new(x: RealMatrix, xp: RealMatrix) -> Result<Self> {
        if x.shape() != xp.shape() {
            return Err(KoopmanError::shape(format!(
                "x is {:?} but xp is {:?}",
                x.shape(),
                xp.shape()
            )));
        }
        crate::numerics::ensure_finite(&x, "x")?;
        crate::numerics::ensure_finite(&xp, "xp")?;
        let col_times = (0..x.ncols())
            .map(|step| TimeIndex { segment: 0, step })
            .collect();
        Ok(SnapshotPair { x, xp, col_times })
    }

    pub fn dim(&self) -> usize {
        self.x.nrows()
    }

    pub fn len(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.x.ncols() == 0
    }

    /// Join independent pair sets column-wise; pairs never straddle inputs.
    pub fn concat(pairs: &[SnapshotPair]) -> Result<Self> {
        let first = pairs
            .first()
            .ok_or_else(|| KoopmanError::shape("no snapshot pairs to concatenate"))?;
        let dim = first.dim();
        if let Some(p) = pairs.iter().find(|p| p.dim() != dim) {
            return Err(KoopmanError::shape(format!(
                "observable dimension {} differs from {dim}",
                p.dim()
            )));
        }
        let total: usize = pairs.iter().map(SnapshotPair::len).sum();
        let mut x = RealMatrix::zeros(dim, total);
        let mut xp = RealMatrix::zeros(dim, total);
        let mut col_times = Vec::with_capacity(total);
        let mut offset = 0;
        let mut segment_base = 0;
        for p in pairs {
            x.columns_mut(offset, p.len()).copy_from(&p.x);
            xp.columns_mut(offset, p.len()).copy_from(&p.xp);
            let local_max = p.col_times.iter().map(|c| c.segment).max().unwrap_or(0);
            col_times.extend(p.col_times.iter().map(|c| TimeIndex {
                segment: c.segment + segment_base,
                step: c.step,
            }));
            segment_base += local_max + 1;
            offset += p.len();
        }
        Ok(SnapshotPair { x, xp, col_times })
    }
}

fn stack_column(parts: &[&[f64]]) -> Vec<f64> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

fn pairs_from_rows(
    states: &[Vec<f64>],
    inputs: Option<&[Vec<f64>]>,
    disturbances: Option<&[Vec<f64>]>,
    augment_inputs: bool,
) -> Result<SnapshotPair> {
    let n = states.len();
    if n < 2 {
        return Err(KoopmanError::shape(format!(
            "need at least 2 samples for snapshot pairs, got {n}"
        )));
    }
    if augment_inputs && inputs.is_none() {
        return Err(KoopmanError::Config(
            "input augmentation requested but the trajectory has no inputs".into(),
        ));
    }
    let column = |t: usize, held: usize| -> Vec<f64> {
        let mut parts: Vec<&[f64]> = vec![&states[t]];
        if augment_inputs {
            if let Some(u) = inputs {
                parts.push(&u[held]);
            }
            if let Some(d) = disturbances {
                parts.push(&d[held]);
            }
        }
        stack_column(&parts)
    };
    let dim = column(0, 0).len();
    let mut x = RealMatrix::zeros(dim, n - 1);
    let mut xp = RealMatrix::zeros(dim, n - 1);
    for t in 0..n - 1 {
        // inputs and disturbances are held over the step: xp carries those of time t
        x.set_column(t, &nalgebra::DVector::from_vec(column(t, t)));
        xp.set_column(t, &nalgebra::DVector::from_vec(column(t + 1, t)));
    }
    Ok(SnapshotPair {
        x,
        xp,
        col_times: (0..n - 1)
            .map(|step| TimeIndex { segment: 0, step })
            .collect(),
    })
}

/// Snapshot matrices `X = [g(z_0) … g(z_{n−2})]`, `X′ = [g(z_1) … g(z_{n−1})]`.
/// With `augment_inputs`, each column is `[state; input; disturbance]` and
/// the successor column repeats the input of the earlier time.
pub fn snapshot_pairs(traj: &Trajectory, augment_inputs: bool) -> Result<SnapshotPair> {
    pairs_from_rows(
        &traj.states,
        traj.inputs.as_deref(),
        traj.disturbances.as_deref(),
        augment_inputs,
    )
}

/// Delay-embedded trajectory: entry `t` stacks `g_t, g_{t+1}, …, g_{t+h−1}` oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedTrajectory {
    pub depth_h: usize,
    pub base: Trajectory,
    pub embedded_states: Vec<Vec<f64>>,
    pub embedded_inputs: Option<Vec<Vec<f64>>>,
    pub embedded_disturbances: Option<Vec<Vec<f64>>>,
}

fn windows(rows: &[Vec<f64>], h: usize) -> Vec<Vec<f64>> {
    rows.windows(h).map(|w| w.concat()).collect()
}

pub fn delay_embed(traj: &Trajectory, h: usize) -> Result<EmbeddedTrajectory> {
    if h == 0 {
        return Err(KoopmanError::Parameter(
            "embedding depth must be at least 1".into(),
        ));
    }
    if h > traj.len() {
        return Err(KoopmanError::shape(format!(
            "embedding depth {h} exceeds trajectory length {}",
            traj.len()
        )));
    }
    Ok(EmbeddedTrajectory {
        depth_h: h,
        base: traj.clone(),
        embedded_states: windows(&traj.states, h),
        embedded_inputs: traj.inputs.as_ref().map(|u| windows(u, h)),
        embedded_disturbances: traj.disturbances.as_ref().map(|d| windows(d, h)),
    })
}

impl EmbeddedTrajectory {
    pub fn len(&self) -> usize {
        self.embedded_states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.embedded_states.is_empty()
    }

    pub fn embedded_dim(&self) -> usize {
        self.depth_h * self.base.state_dim()
    }

    /// Consecutive windows must agree on their `h − 1` shared blocks.
    pub fn windows_overlap(&self) -> bool {
        let ny = self.base.state_dim();
        self.embedded_states
            .windows(2)
            .all(|p| p[0][ny..] == p[1][..p[1].len() - ny])
    }

    pub fn snapshot_pairs(&self, augment_inputs: bool) -> Result<SnapshotPair> {
        pairs_from_rows(
            &self.embedded_states,
            self.embedded_inputs.as_deref(),
            self.embedded_disturbances.as_deref(),
            augment_inputs,
        )
    }
}

/// One-step relative training residual of SVD-DMD on the embedding of each depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthScore {
    pub depth: usize,
    pub rank: usize,
    pub residual: f64,
}

/// Fit SVD-DMD at each candidate depth and report how well the embedded
/// dynamics close linearly. Depths that leave fewer than two embedded
/// samples are skipped.
pub fn sweep_embedding_depth(
    traj: &Trajectory,
    depths: impl IntoIterator<Item = usize>,
    augment_inputs: bool,
) -> Result<Vec<DepthScore>> {
    let mut scores = vec![];
    for h in depths {
        if h == 0 || h + 1 > traj.len() {
            continue;
        }
        let pair = delay_embed(traj, h)?.snapshot_pairs(augment_inputs)?;
        let model = crate::dmd::fit_svd_dmd(&pair, DEFAULT_RTOL)?;
        scores.push(DepthScore {
            depth: h,
            rank: model.svd.rank,
            residual: model.fit_residual,
        });
    }
    Ok(scores)
}
