//! Command-line front end for `opf-sense`.
//!
//! [`run`] does all the work and returns the process exit status, so the
//! binary is a thin wrapper and tests can drive the CLI in process.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use opf_sense::chain::{build_chain, ChainConfig};
use opf_sense::dcopf::{
    check_regularity, extract_binding_set_with, kkt_residuals, solve_opf_regularized_with, BINDING_TOL,
    SOLVER_TOL,
};
use opf_sense::decompose::worst_case_decomposed_with;
use opf_sense::linalg::RANK_TOL;
use opf_sense::matpower::{build_network, parse_matpower};
use opf_sense::sensitivity::{
    local_sensitivity_with, worst_case_all_with, worst_case_miso_with, worst_case_siso_with,
};
use opf_sense::{BindingSet, LoadVector, Network, OpfParams, Tolerances, VertexLabel};

#[derive(Parser, Debug)]
#[command(name = "opf-sense", version, about = "Worst-case load sensitivities of DC optimal power flow")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: Options,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Solve the OPF and print dispatch, binding set and KKT residuals.
    Solve,
    /// Sensitivity of one pair at the solved operating point.
    SensLocal,
    /// Worst-case sensitivity of one pair, or of every pair without --pair.
    SensWcs,
    /// Worst-case sensitivity of one generator to several loads (--pair G L1,L2,...).
    SensMiso,
    /// Worst case of one pair computed stage by stage across bridges.
    Decompose,
    /// Worst-case table for every generator/load pair.
    Report,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Csv,
    Json,
}

#[derive(clap::Args, Debug)]
pub struct Options {
    /// MATPOWER case file.
    #[arg(long, global = true)]
    pub case: Option<PathBuf>,
    /// JSON file chaining copies of the case with tie lines.
    #[arg(long, global = true)]
    pub chain: Option<PathBuf>,
    /// Generator and load bus, e.g. `--pair 3 9` or `--pair 1 "7''"`.
    #[arg(long, global = true, num_args = 2, value_names = ["GEN", "LOAD"])]
    pub pair: Option<Vec<String>>,
    /// Load override in MW, one value per load bus in internal order.
    #[arg(long, global = true, value_delimiter = ',')]
    pub load: Option<Vec<f64>>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    pub format: Format,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, env = "OPF_SENSE_THREADS", default_value_t = 0)]
    pub threads: usize,
    /// Distance to a limit (per-unit) at which it counts as binding.
    #[arg(long, global = true, default_value_t = BINDING_TOL)]
    pub binding_tol: f64,
    /// Relative pivot below which a binding set is dependent.
    #[arg(long, global = true, default_value_t = RANK_TOL)]
    pub rank_tol: f64,
    /// Simplex optimality and feasibility tolerance.
    #[arg(long, global = true, default_value_t = SOLVER_TOL)]
    pub solver_tol: f64,
    /// Seed for the cost perturbation applied to non-unique optima.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
}

enum Failure {
    Usage(String),
    Domain(opf_sense::Error),
    Io(String),
}

impl From<opf_sense::Error> for Failure {
    fn from(e: opf_sense::Error) -> Self {
        Failure::Domain(e)
    }
}

struct Loaded {
    net: Network,
    params: OpfParams,
    load: LoadVector,
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn load_case(opts: &Options) -> Result<Loaded, Failure> {
    let path = opts
        .case
        .as_ref()
        .ok_or_else(|| Failure::Usage("--case is required".into()))?;
    let case = parse_matpower(&read(path)?)?;
    let (base, base_params) = build_network(&case)?;
    let profile = case.load_profile(&base);
    let (net, params, mut demand) = match &opts.chain {
        None => (base, base_params, profile),
        Some(p) => {
            let cfg = ChainConfig::from_json(&read(p)?)?;
            let ties = cfg.resolve(&base, &base_params)?;
            let (net, params) = build_chain(&base, &base_params, cfg.copies, &ties)?;
            let demand = profile.repeat(cfg.copies);
            (net, params, demand)
        }
    };
    if let Some(mw) = &opts.load {
        if mw.len() != net.n_load() {
            return Err(Failure::Usage(format!(
                "--load has {} values for {} load buses",
                mw.len(),
                net.n_load()
            )));
        }
        demand = mw.iter().map(|v| v / case.base_mva).collect();
    }
    let load = LoadVector::from_demand(demand)?;
    Ok(Loaded { net, params, load })
}

fn find_vertex(net: &Network, name: &str, generator: bool) -> Result<usize, Failure> {
    let what = if generator { "generator" } else { "load" };
    let v = net
        .labels()
        .iter()
        .position(|l| l.to_string() == name.trim())
        .ok_or_else(|| Failure::Usage(format!("no bus named `{name}`")))?;
    match (generator, net.is_generator(v)) {
        (true, true) => Ok(v),
        (false, false) => Ok(v - net.n_gen()),
        _ => Err(Failure::Usage(format!("bus `{name}` is not a {what} bus"))),
    }
}

fn pair_args(opts: &Options) -> Result<(&str, &str), Failure> {
    match opts.pair.as_deref() {
        Some([g, l]) => Ok((g, l)),
        _ => Err(Failure::Usage("--pair GEN LOAD is required".into())),
    }
}

fn bus_value(label: &VertexLabel) -> Value {
    match label {
        VertexLabel::Bus { id, copy: 0 } => json!(id),
        other => json!(other.to_string()),
    }
}

#[derive(Serialize)]
struct BindingJson {
    generators: Vec<Value>,
    branches: Vec<[Value; 2]>,
}

fn binding_json(net: &Network, set: &BindingSet) -> BindingJson {
    BindingJson {
        generators: set.gens.iter().map(|&g| bus_value(net.label(g))).collect(),
        branches: set
            .branches
            .iter()
            .map(|&k| {
                let e = net.edges()[k];
                [bus_value(net.label(e.from)), bus_value(net.label(e.to))]
            })
            .collect(),
    }
}

fn binding_text(net: &Network, set: &BindingSet) -> String {
    let mut parts: Vec<String> = set.gens.iter().map(|&g| net.label(g).to_string()).collect();
    parts.extend(set.branches.iter().map(|&k| {
        let e = net.edges()[k];
        format!("({},{})", net.label(e.from), net.label(e.to))
    }));
    parts.join(" ")
}

fn network_json(net: &Network) -> Value {
    let gens: Vec<Value> = (0..net.n_gen()).map(|v| bus_value(net.label(v))).collect();
    let loads: Vec<Value> = (0..net.n_load())
        .map(|j| bus_value(net.label(net.load_vertex(j))))
        .collect();
    json!({
        "buses": net.n_bus(),
        "generators": net.n_gen(),
        "loads": net.n_load(),
        "branches": net.n_edges(),
        "bus_map": { "generators": gens, "loads": loads },
    })
}

/// Output of a command in all three renderings.
struct Output {
    json: Value,
    table: String,
    csv: Vec<Vec<String>>,
}

fn render_csv(rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.write_record(r).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("flushing to memory")).expect("csv is utf-8")
}

fn report(net: &Network, tol: &Tolerances) -> Result<Output, Failure> {
    let r = worst_case_all_with(net, tol)?;
    let (g, l) = (net.n_gen(), net.n_load());
    let gen_names: Vec<String> = (0..g).map(|i| net.label(i).to_string()).collect();
    let load_names: Vec<String> = (0..l).map(|j| net.label(net.load_vertex(j)).to_string()).collect();

    let mut table = format!("{:>8}", "G\\L");
    for name in &load_names {
        let _ = write!(table, " {name:>9}");
    }
    table.push('\n');
    let mut csv = vec![std::iter::once("gen".to_string()).chain(load_names.iter().cloned()).collect()];
    let mut pairs = Vec::new();
    for i in 0..g {
        let _ = write!(table, "{:>8}", gen_names[i]);
        let mut row = vec![gen_names[i].clone()];
        for j in 0..l {
            let v = r.cwc[(i, j)];
            let _ = write!(table, " {v:>9.4}");
            row.push(format!("{v:.4}"));
            pairs.push(json!({
                "gen": bus_value(net.label(i)),
                "load": bus_value(net.label(net.load_vertex(j))),
                "cwc": v,
                "binding": binding_json(net, r.argmax(i, j)),
            }));
        }
        table.push('\n');
        csv.push(row);
    }
    let _ = writeln!(
        table,
        "candidates: {} total, {} independent",
        r.candidates_total, r.candidates_valid
    );
    Ok(Output {
        json: json!({
            "network": network_json(net),
            "pairs": pairs,
            "diagnostics": {
                "candidates_total": r.candidates_total,
                "candidates_valid": r.candidates_valid,
                "candidates_ill_conditioned": r.candidates_ill_conditioned,
                "tolerances": tol,
            },
        }),
        table,
        csv,
    })
}

fn single_pair(net: &Network, g: usize, j: usize, value: f64, set: &BindingSet, key: &str, tol: &Tolerances) -> Output {
    let gen = net.label(g).to_string();
    let load = net.label(net.load_vertex(j)).to_string();
    let binding = binding_text(net, set);
    Output {
        json: json!({
            "network": network_json(net),
            "pairs": [{
                "gen": bus_value(net.label(g)),
                "load": bus_value(net.label(net.load_vertex(j))),
                key: value,
                "binding": binding_json(net, set),
            }],
            "diagnostics": { "tolerances": tol },
        }),
        table: format!("{key} {gen} <- {load}: {value:.4}\nbinding: {binding}\n"),
        csv: vec![
            vec!["gen".into(), "load".into(), key.into(), "binding".into()],
            vec![gen, load, format!("{value:.6}"), binding],
        ],
    }
}

fn solve(data: &Loaded, tol: &Tolerances, seed: u64) -> Result<Output, Failure> {
    let Loaded { net, params, load } = data;
    let reg = solve_opf_regularized_with(net, params, load, seed, tol)?;
    let sol = &reg.solution;
    let kkt = kkt_residuals(sol, net, params, load);
    let regularity = check_regularity(sol, tol.solver);
    let binding = extract_binding_set_with(sol, net, params, tol);

    let mut table = String::from("     bus   dispatch (p.u.)\n");
    let mut csv = vec![vec!["bus".to_string(), "dispatch_pu".to_string()]];
    let mut dispatch = Vec::new();
    for (i, s) in sol.gen.iter().enumerate() {
        let name = net.label(i).to_string();
        let _ = writeln!(table, "{name:>8}   {s:>12.6}");
        csv.push(vec![name, format!("{s:.9}")]);
        dispatch.push(json!({ "bus": bus_value(net.label(i)), "pu": s }));
    }
    let flows: Vec<Value> = sol
        .flows
        .iter()
        .zip(net.edges())
        .map(|(p, e)| json!({ "from": bus_value(net.label(e.from)), "to": bus_value(net.label(e.to)), "pu": p }))
        .collect();
    let _ = writeln!(table, "objective: {:.6}", sol.objective);
    let _ = writeln!(table, "max KKT residual: {:.3e}", kkt.max());
    let binding_value = match &binding {
        Ok(set) => {
            let _ = writeln!(table, "binding: {}", binding_text(net, set));
            json!(binding_json(net, set))
        }
        Err(e) => {
            let _ = writeln!(table, "binding: not regular ({})", e.name());
            json!({ "error": e.name(), "message": e.to_string() })
        }
    };
    if reg.perturbed_cost.is_some() {
        table.push_str("cost perturbed to make the optimum unique\n");
    }
    Ok(Output {
        json: json!({
            "network": network_json(net),
            "pairs": [],
            "diagnostics": {
                "objective": sol.objective,
                "dispatch": dispatch,
                "flows": flows,
                "binding": binding_value,
                "kkt": kkt,
                "regularity": regularity,
                "perturbed_cost": reg.perturbed_cost,
                "tolerances": tol,
            },
        }),
        table,
        csv,
    })
}

fn execute(cli: &Cli) -> Result<Output, Failure> {
    let opts = &cli.opts;
    let tol = Tolerances {
        binding: opts.binding_tol,
        rank: opts.rank_tol,
        solver: opts.solver_tol,
    };
    if cli.command == Command::Report && opts.pair.is_some() {
        return Err(Failure::Usage("report takes no --pair".into()));
    }
    let data = load_case(opts)?;
    let net = &data.net;
    match cli.command {
        Command::Solve => solve(&data, &tol, opts.seed),
        Command::Report => report(net, &tol),
        Command::SensWcs if opts.pair.is_none() => report(net, &tol),
        Command::SensWcs => {
            let (g, l) = pair_args(opts)?;
            let (g, j) = (find_vertex(net, g, true)?, find_vertex(net, l, false)?);
            let (v, set) = worst_case_siso_with(net, g, j, &tol)?;
            Ok(single_pair(net, g, j, v, &set, "cwc", &tol))
        }
        Command::SensLocal => {
            let (g, l) = pair_args(opts)?;
            let (g, j) = (find_vertex(net, g, true)?, find_vertex(net, l, false)?);
            let v = local_sensitivity_with(net, &data.params, &data.load, g, j, &tol)?;
            let sol = opf_sense::dcopf::solve_opf_with(net, &data.params, &data.load, &tol)?;
            let set = extract_binding_set_with(&sol, net, &data.params, &tol)?;
            Ok(single_pair(net, g, j, v, &set, "local", &tol))
        }
        Command::SensMiso => {
            let (g, l) = pair_args(opts)?;
            let g = find_vertex(net, g, true)?;
            let loads = l
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| find_vertex(net, s, false))
                .collect::<Result<Vec<_>, _>>()?;
            let (v, set) = worst_case_miso_with(net, g, &loads, &tol)?;
            let names: Vec<Value> = loads.iter().map(|&j| bus_value(net.label(net.load_vertex(j)))).collect();
            let text: Vec<String> = loads.iter().map(|&j| net.label(net.load_vertex(j)).to_string()).collect();
            let gen = net.label(g).to_string();
            let binding = binding_text(net, &set);
            Ok(Output {
                json: json!({
                    "network": network_json(net),
                    "pairs": [{
                        "gen": bus_value(net.label(g)),
                        "load": names,
                        "cwc": v,
                        "binding": binding_json(net, &set),
                    }],
                    "diagnostics": { "norm": "euclidean", "tolerances": tol },
                }),
                table: format!("cwc {gen} <- {{{}}}: {v:.4}\nbinding: {binding}\n", text.join(",")),
                csv: vec![
                    vec!["gen".into(), "loads".into(), "cwc".into(), "binding".into()],
                    vec![gen, text.join(";"), format!("{v:.6}"), binding],
                ],
            })
        }
        Command::Decompose => {
            let (g, l) = pair_args(opts)?;
            let (g, j) = (find_vertex(net, g, true)?, find_vertex(net, l, false)?);
            let d = worst_case_decomposed_with(net, g, j, &tol)?;
            let gen = net.label(g).to_string();
            let load = net.label(net.load_vertex(j)).to_string();
            let mut table = format!("cwc {gen} <- {load}: {:.4} over {} stage(s)\n", d.value, d.factors.len());
            let mut csv = vec![vec![
                "stage".to_string(),
                "source".into(),
                "sink".into(),
                "factor".into(),
                "binding".into(),
            ]];
            let mut factors = Vec::new();
            for (k, (f, stage)) in d.factors.iter().zip(&d.decomposition.stages).enumerate() {
                let binding = binding_text(&stage.network, &f.binding);
                let _ = writeln!(table, "  {k}: {} <- {}  {:.4}  [{binding}]", f.source, f.sink, f.value);
                csv.push(vec![
                    k.to_string(),
                    f.source.to_string(),
                    f.sink.to_string(),
                    format!("{:.6}", f.value),
                    binding,
                ]);
                factors.push(json!({
                    "source": bus_value(&f.source),
                    "sink": bus_value(&f.sink),
                    "cwc": f.value,
                    "binding": binding_json(&stage.network, &f.binding),
                }));
            }
            let bridges: Vec<[Value; 2]> = d
                .decomposition
                .bridges
                .iter()
                .map(|&k| {
                    let pn = &d.pruned.network;
                    let e = pn.edges()[k];
                    [bus_value(pn.label(e.from)), bus_value(pn.label(e.to))]
                })
                .collect();
            // Union of stage bindings, ports dropped.
            let mut gens = Vec::new();
            let mut branches = Vec::new();
            for (f, stage) in d.factors.iter().zip(&d.decomposition.stages) {
                let sn = &stage.network;
                for &gi in &f.binding.gens {
                    if stage.vertex_map[gi].is_some() {
                        gens.push(bus_value(sn.label(gi)));
                    }
                }
                for &k in &f.binding.branches {
                    let e = sn.edges()[k];
                    if stage.vertex_map[e.from].is_some() && stage.vertex_map[e.to].is_some() {
                        branches.push([bus_value(sn.label(e.from)), bus_value(sn.label(e.to))]);
                    }
                }
            }
            csv.push(vec![
                "product".into(),
                gen.clone(),
                load.clone(),
                format!("{:.6}", d.value),
                String::new(),
            ]);
            Ok(Output {
                json: json!({
                    "network": network_json(net),
                    "pairs": [{
                        "gen": bus_value(net.label(g)),
                        "load": bus_value(net.label(net.load_vertex(j))),
                        "cwc": d.value,
                        "binding": { "generators": gens, "branches": branches },
                        "factors": factors,
                    }],
                    "diagnostics": {
                        "bridges_on_path": bridges,
                        "pruned_buses": d.pruned.network.n_bus(),
                        "tolerances": tol,
                    },
                }),
                table,
                csv,
            })
        }
    }
}

fn error_json(name: &str, message: &str) -> String {
    json!({ "error": { "name": name, "message": message } }).to_string()
}

/// Parses `argv` (program name first), runs the command and writes the
/// report to `out`. Returns 0 on success, 1 on domain errors and 2 on usage
/// errors.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = out.write_all(text.as_bytes());
                    0
                }
                _ => {
                    let _ = err.write_all(text.as_bytes());
                    2
                }
            };
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.opts.threads).build() {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "{}", error_json("ThreadPool", &e.to_string()));
            return 1;
        }
    };
    match pool.install(|| execute(&cli)) {
        Ok(o) => {
            let text = match cli.opts.format {
                Format::Json => {
                    let mut s = serde_json::to_string_pretty(&o.json).expect("report serializes");
                    s.push('\n');
                    s
                }
                Format::Table => o.table,
                Format::Csv => render_csv(&o.csv),
            };
            let _ = out.write_all(text.as_bytes());
            0
        }
        Err(Failure::Usage(m)) => {
            let _ = writeln!(err, "{}", error_json("Usage", &m));
            2
        }
        Err(Failure::Io(m)) => {
            let _ = writeln!(err, "{}", error_json("Io", &m));
            1
        }
        Err(Failure::Domain(e)) => {
            let _ = writeln!(err, "{}", error_json(e.name(), &e.to_string()));
            1
        }
    }
}
