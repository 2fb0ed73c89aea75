//! Command-line front end: classification, normalization, leaf-chart
//! grids, directional resummation, and Stokes-data extraction, as thin
//! wrappers over the library. Machine reports are JSON on stdout (or
//! `--out`), coefficient tables and grids are CSV. Any module error exits
//! nonzero with the error name in the report.

use clap::{Args, Parser, Subcommand, ValueEnum};
use drsn::coeff::{C64, CRat, Coeff};
use drsn::io;
use drsn::leafspace::{limit_check, LeafChart, SectorSpec};
use drsn::normalizer::{
    normalize, normalize_div_integrable, normalize_symplectic, verify_normalization, NormalizeError,
};
use drsn::series::UniSeries;
use drsn::stokes::{moduli_report, StokesConfig};
use drsn::summation::{borel_transform, gevrey_fit, lateral_jump, laplace_sum, SumConfig};
use drsn::vfield::{classify, DiagSaddleNode};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "drsn", version, about = "Doubly-resonant saddle-node toolkit")]
struct Cli {
    /// Write the JSON report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<std::path::PathBuf>,
    /// Seed for randomized sample generation (leafmap --random).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Arith {
    Exact,
    Float,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum NormMode {
    General,
    Div,
    Symplectic,
}

#[derive(Args)]
struct FieldInput {
    /// Vector-field document.
    #[arg(long)]
    input: std::path::PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the classification predicates of a field.
    Classify {
        #[command(flatten)]
        field: FieldInput,
        /// Jet order for the orbital-linearization test.
        #[arg(long, default_value_t = 6)]
        jet: usize,
        #[arg(long, value_enum, default_value_t = Arith::Exact)]
        arith: Arith,
    },
    /// Compute the formal normal form and normalizing map.
    Normalize {
        #[command(flatten)]
        field: FieldInput,
        #[arg(long)]
        order: usize,
        #[arg(long, value_enum, default_value_t = NormMode::General)]
        mode: NormMode,
        #[arg(long, value_enum, default_value_t = Arith::Exact)]
        arith: Arith,
    },
    /// Evaluate the leaf chart of the (normalized) field on a grid and
    /// emit CSV rows `x_re,x_im,y1_re,y1_im,y2_re,y2_im,h1_re,h1_im,
    /// h2_re,h2_im,w_re,w_im`.
    Leafmap {
        #[command(flatten)]
        field: FieldInput,
        #[arg(long)]
        order: usize,
        /// Sector direction (radians); defaults to `arg(lambda)`.
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long, default_value_t = std::f64::consts::PI)]
        opening: f64,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        /// Radial grid points per ray.
        #[arg(long, default_value_t = 8)]
        grid_x: usize,
        /// Rays across the sector.
        #[arg(long, default_value_t = 5)]
        rays: usize,
        /// Random y-samples per x (seeded with --seed).
        #[arg(long, default_value_t = 4)]
        random: usize,
        /// CSV output path (stdout when omitted).
        #[arg(long)]
        csv: Option<std::path::PathBuf>,
    },
    /// Borel-Pade-Laplace sum of a coefficient file in a direction.
    BorelSum {
        /// Coefficient file, one `re im` pair per line, powers of x from 0.
        #[arg(long)]
        coeffs: std::path::PathBuf,
        #[arg(long)]
        theta: f64,
        /// Evaluation point `re,im`.
        #[arg(long, value_parser = parse_c64)]
        x: C64,
        /// Pade degrees `L M` (default from the coefficient count).
        #[arg(long, num_args = 2)]
        pade: Option<Vec<usize>>,
        /// Also report the lateral jump across `theta`.
        #[arg(long)]
        jump: bool,
    },
    /// Full Stokes-data extraction and moduli report.
    Stokes {
        #[command(flatten)]
        field: FieldInput,
        #[arg(long)]
        order: usize,
        #[arg(long, default_value_t = 6)]
        nmax: i64,
        #[arg(long, default_value_t = 4)]
        worder: usize,
        /// Extraction base-point radius and angular offset from each
        /// narrow-sector bisector.
        #[arg(long, default_value_t = 0.3)]
        x_radius: f64,
        #[arg(long, default_value_t = 0.78)]
        x_offset: f64,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// Prefix for CSV coefficient tables (`<prefix>_plus.csv`,
        /// `<prefix>_minus.csv`).
        #[arg(long)]
        csv: Option<String>,
    },
}

fn parse_c64(s: &str) -> Result<C64, String> {
    let (re, im) = s
        .split_once(',')
        .ok_or_else(|| format!("expected `re,im`, got `{s}`"))?;
    Ok(C64::new(
        re.trim().parse().map_err(|_| format!("bad float `{re}`"))?,
        im.trim().parse().map_err(|_| format!("bad float `{im}`"))?,
    ))
}

struct Failure {
    name: &'static str,
    message: String,
}

impl Failure {
    fn new(name: &'static str, e: impl std::fmt::Display) -> Failure {
        Failure { name, message: e.to_string() }
    }
}

impl From<io::IoError> for Failure {
    fn from(e: io::IoError) -> Failure {
        Failure::new("ParseError", e)
    }
}

impl From<NormalizeError> for Failure {
    fn from(e: NormalizeError) -> Failure {
        let name = match &e {
            NormalizeError::TruncationTooSmall { .. } => "TruncationTooSmall",
            NormalizeError::DegenerateResidue { .. } => "DegenerateResidue",
            NormalizeError::DivIntegrabilityObstruction { .. } => "DivIntegrabilityObstruction",
            NormalizeError::NotTransversallyHamiltonian => "NotTransversallyHamiltonian",
            NormalizeError::SymplecticityNotCertified { .. } => "SymplecticityNotCertified",
            NormalizeError::VField(_) => "InvalidField",
            NormalizeError::Series(_) => "SeriesError",
        };
        Failure::new(name, e)
    }
}

impl From<drsn::vfield::VFieldError> for Failure {
    fn from(e: drsn::vfield::VFieldError) -> Failure {
        Failure::new("InvalidField", e)
    }
}

impl From<drsn::summation::SumError> for Failure {
    fn from(e: drsn::summation::SumError) -> Failure {
        let name = match &e {
            drsn::summation::SumError::PoleOnRay { .. } => "PoleOnRay",
            drsn::summation::SumError::QuadratureFailure { .. } => "QuadratureFailure",
            drsn::summation::SumError::InvalidInput(_) => "InvalidInput",
        };
        Failure::new(name, e)
    }
}

impl From<drsn::leafspace::LeafError> for Failure {
    fn from(e: drsn::leafspace::LeafError) -> Failure {
        let name = match &e {
            drsn::leafspace::LeafError::XOutsideSector { .. } => "XOutsideSector",
            drsn::leafspace::LeafError::OverflowGuard { .. } => "OverflowGuard",
            drsn::leafspace::LeafError::NotDivIntegrable { .. } => "NotDivIntegrable",
            drsn::leafspace::LeafError::BadSector(_) => "BadSector",
        };
        Failure::new(name, e)
    }
}

impl From<drsn::stokes::StokesError> for Failure {
    fn from(e: drsn::stokes::StokesError) -> Failure {
        let name = match &e {
            drsn::stokes::StokesError::AnnulusEmpty => "AnnulusEmpty",
            drsn::stokes::StokesError::NewtonDivergence { .. } => "NewtonDivergence",
            drsn::stokes::StokesError::MonomialCutoffTooSmall { .. } => "MonomialCutoffTooSmall",
            drsn::stokes::StokesError::InsufficientRange { .. } => "InsufficientRange",
            drsn::stokes::StokesError::Leaf(l) => return Failure::from(l_clone(l)),
            drsn::stokes::StokesError::Sum(_) => "QuadratureFailure",
            drsn::stokes::StokesError::Normalize(e) => {
                let name = match e {
                    NormalizeError::TruncationTooSmall { .. } => "TruncationTooSmall",
                    NormalizeError::DegenerateResidue { .. } => "DegenerateResidue",
                    NormalizeError::DivIntegrabilityObstruction { .. } => {
                        "DivIntegrabilityObstruction"
                    }
                    NormalizeError::NotTransversallyHamiltonian => "NotTransversallyHamiltonian",
                    NormalizeError::SymplecticityNotCertified { .. } => "SymplecticityNotCertified",
                    NormalizeError::VField(_) => "InvalidField",
                    NormalizeError::Series(_) => "SeriesError",
                };
                return Failure::new(name, e);
            }
        };
        Failure::new(name, e)
    }
}

fn l_clone(l: &drsn::leafspace::LeafError) -> drsn::leafspace::LeafError {
    match l {
        drsn::leafspace::LeafError::XOutsideSector { x } => {
            drsn::leafspace::LeafError::XOutsideSector { x: *x }
        }
        drsn::leafspace::LeafError::OverflowGuard { magnitude, limit } => {
            drsn::leafspace::LeafError::OverflowGuard { magnitude: *magnitude, limit: *limit }
        }
        drsn::leafspace::LeafError::NotDivIntegrable { detail } => {
            drsn::leafspace::LeafError::NotDivIntegrable { detail: detail.clone() }
        }
        drsn::leafspace::LeafError::BadSector(s) => {
            drsn::leafspace::LeafError::BadSector(s.clone())
        }
    }
}

fn read_field_doc(path: &std::path::Path) -> Result<io::VfDocument, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::new("ParseError", format!("{}: {e}", path.display())))?;
    Ok(io::parse_vector_field(&text)?)
}

fn coeff_json<K: Coeff>(c: &K) -> Value {
    let toks: Vec<String> = c.format_entry().split_whitespace().map(String::from).collect();
    json!({ "re": toks[0], "im": toks[1] })
}

fn series_json<K: Coeff>(s: &drsn::series::MultiSeries<K>) -> Value {
    let rows: Vec<Value> = s
        .terms()
        .map(|(e, c)| {
            let toks: Vec<String> =
                c.format_entry().split_whitespace().map(String::from).collect();
            json!([e[0], e[1], e[2], toks[0], toks[1]])
        })
        .collect();
    json!({ "trunc_order": s.trunc_order(), "entries": rows })
}

fn uniseries_json<K: Coeff>(s: &UniSeries<K>) -> Value {
    let rows: Vec<Value> = (0..=s.trunc_order()).map(|k| coeff_json(&s.coeff(k))).collect();
    json!(rows)
}

fn run_classify(doc: &io::VfDocument, jet: usize, arith: Arith) -> Result<Value, Failure> {
    fn report<K: Coeff>(y: &DiagSaddleNode<K>, jet: usize) -> Result<Value, Failure> {
        let rep = classify(y, jet)?;
        Ok(json!({
            "residue": coeff_json(&rep.residue),
            "nondegenerate": format!("{:?}", rep.nondegenerate),
            "nondegenerate_note": rep.nondegenerate_note,
            "strictly_nondegenerate": rep.strictly_nondegenerate,
            "div_integrable": serde_json::to_value(&rep.div_integrable).unwrap(),
            "transversally_hamiltonian": rep.transversally_hamiltonian,
        }))
    }
    match arith {
        Arith::Exact => report(&doc.to_field::<CRat>()?, jet),
        Arith::Float => report(&doc.to_field::<C64>()?, jet),
    }
}

fn run_normalize(
    doc: &io::VfDocument,
    order: usize,
    mode: NormMode,
    arith: Arith,
) -> Result<Value, Failure> {
    fn report<K: Coeff>(
        y: &DiagSaddleNode<K>,
        order: usize,
        mode: NormMode,
    ) -> Result<Value, Failure> {
        let (phi, nf) = match mode {
            NormMode::General => normalize(y, order)?,
            NormMode::Div => normalize_div_integrable(y, order)?,
            NormMode::Symplectic => normalize_symplectic(y, order)?,
        };
        let residual = verify_normalization(y, &phi, &nf, order)?;
        Ok(json!({
            "order": order,
            "lambda": coeff_json(&nf.lambda),
            "a1": coeff_json(&nf.a1),
            "a2": coeff_json(&nf.a2),
            "c1": uniseries_json(&nf.c1),
            "c2": uniseries_json(&nf.c2),
            "phi1": series_json(phi.phi1()),
            "phi2": series_json(phi.phi2()),
            "residual": if K::EXACT && residual == 0.0 { json!("0") } else { json!(residual) },
        }))
    }
    match arith {
        Arith::Exact => report(&doc.to_field::<CRat>()?, order, mode),
        Arith::Float => report(&doc.to_field::<C64>()?, order, mode),
    }
}

#[allow(clippy::too_many_arguments)]
fn run_leafmap(
    doc: &io::VfDocument,
    order: usize,
    theta: Option<f64>,
    opening: f64,
    radius: f64,
    grid_x: usize,
    rays: usize,
    random: usize,
    seed: u64,
) -> Result<(Value, String), Failure> {
    let y = doc.to_field::<C64>()?;
    let (_, nf) = normalize_div_integrable(&y, order)?;
    let theta = theta.unwrap_or_else(|| nf.lambda.arg());
    let sector = SectorSpec::new(theta, opening, radius, 0.0)?;
    let chart = LeafChart::new(nf, sector)?;

    // Simple xorshift so grids are reproducible from the seed.
    let mut state = seed ^ 0x9e3779b97f4a7c15;
    let mut rnd = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };

    let mut csv = String::from(
        "x_re,x_im,y1_re,y1_im,y2_re,y2_im,h1_re,h1_im,h2_re,h2_im,w_re,w_im\n",
    );
    let mut rows = 0usize;
    for ri in 0..rays.max(1) {
        let frac = if rays > 1 { ri as f64 / (rays - 1) as f64 - 0.5 } else { 0.0 };
        let ang = theta + frac * (opening * 0.8);
        for xi in 0..grid_x.max(1) {
            let r = radius * 0.75 * 0.75f64.powi(xi as i32);
            let x = C64::from_polar(r, ang);
            for _ in 0..random.max(1) {
                let y1 = C64::new(0.08 * rnd(), 0.08 * rnd());
                let y2 = C64::new(0.08 * rnd(), 0.08 * rnd());
                match chart.first_integrals(x, y1, y2) {
                    Ok((h1, h2, w)) => {
                        csv.push_str(&format!(
                            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                            x.re, x.im, y1.re, y1.im, y2.re, y2.im, h1.re, h1.im, h2.re, h2.im,
                            w.re, w.im
                        ));
                        rows += 1;
                    }
                    Err(drsn::leafspace::LeafError::OverflowGuard { .. }) => continue,
                    Err(e) => return Err(e.into()),
                }
            }
        }
    }
    // A decay report along the bisector documents which side the sector is.
    let lim = limit_check(&chart, 1, C64::new(0.1, 0.0), theta, 8)?;
    let summary = json!({
        "rows": rows,
        "sector": { "theta": theta, "opening": opening, "radius": radius },
        "f1_trend_matches": lim.monotone_matches,
    });
    Ok((summary, csv))
}

fn run_borel_sum(
    coeffs_path: &std::path::Path,
    theta: f64,
    x: C64,
    pade: Option<Vec<usize>>,
    jump: bool,
) -> Result<Value, Failure> {
    let text = std::fs::read_to_string(coeffs_path)
        .map_err(|e| Failure::new("ParseError", format!("{}: {e}", coeffs_path.display())))?;
    let coeffs = io::parse_coefficients(&text)?;
    let mut series = UniSeries::zero(coeffs.len() - 1);
    for (k, c) in coeffs.iter().enumerate() {
        series.set_coeff(k, *c);
    }
    let b = borel_transform(&series);
    let mut cfg = SumConfig::default();
    if let Some(p) = pade {
        cfg.pade = Some((p[0], p[1]));
    }
    // On a singular direction the directional value does not exist; when
    // the caller asked for the jump anyway, report the jump with a null
    // value instead of failing.
    let v = match laplace_sum(&b, theta, x, &cfg) {
        Ok(v) => Some(v),
        Err(drsn::summation::SumError::PoleOnRay { .. }) if jump => None,
        Err(e) => return Err(e.into()),
    };
    let cert = gevrey_fit(&coeffs).ok();
    let jump_value = if jump {
        let j = lateral_jump(&b, theta, drsn::summation::LATERAL_EPS, x, &cfg)?;
        Some(json!({
            "re": j.value_re, "im": j.value_im,
            "error_estimate": j.error_estimate,
            "eps": drsn::summation::LATERAL_EPS,
        }))
    } else {
        None
    };
    Ok(json!({
        "theta": theta,
        "x": { "re": x.re, "im": x.im },
        "value": v.map(|v| json!({ "re": v.value_re, "im": v.value_im })),
        "error_estimate": v.map(|v| v.error_estimate),
        "ray_used": v.map(|v| v.ray_used),
        "certificate": cert.map(|c| serde_json::to_value(&c).unwrap()),
        "jump": jump_value,
    }))
}

fn stokes_csv(data: &drsn::stokes::StokesData) -> String {
    let mut out = String::from("component,index,w_power,re,im,error\n");
    for (&(j, n), t) in &data.tables {
        for (p, c) in t.coeffs.iter().enumerate() {
            out.push_str(&format!("{j},{n},{p},{},{},{}\n", c.0, c.1, c.2));
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn run_stokes(
    doc: &io::VfDocument,
    order: usize,
    nmax: i64,
    worder: usize,
    x_radius: f64,
    x_offset: f64,
    tol: f64,
    csv: Option<String>,
) -> Result<Value, Failure> {
    let y = doc.to_field::<C64>()?;
    let threads = std::env::var("DRSN_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(1usize);
    let cfg = StokesConfig {
        n_max: nmax,
        w_order: worder,
        x_radius,
        threads,
        ..Default::default()
    };
    let out = drsn::stokes::extract_stokes_data(&y, order, x_offset, &cfg)?;
    let (plus, minus, tail) = (out.plus, out.minus, out.tail_estimate);
    let report = moduli_report(&plus, &minus, tol, &cfg)?;

    if let Some(prefix) = csv {
        std::fs::write(format!("{prefix}_plus.csv"), stokes_csv(&plus))
            .map_err(|e| Failure::new("WriteError", e))?;
        std::fs::write(format!("{prefix}_minus.csv"), stokes_csv(&minus))
            .map_err(|e| Failure::new("WriteError", e))?;
    }
    Ok(json!({
        "order": order,
        "config": { "n_max": nmax, "w_order": worder, "x_radius": x_radius,
                    "x_offset": x_offset, "tol": tol },
        "tail_estimate": tail,
        "plus": serde_json::to_value(&plus).unwrap(),
        "minus": serde_json::to_value(&minus).unwrap(),
        "report": serde_json::to_value(&report).unwrap(),
    }))
}

fn main() {
    let cli = Cli::parse();
    let seed = cli.seed;
    let result: Result<Value, Failure> = match &cli.command {
        Command::Classify { field, jet, arith } => {
            read_field_doc(&field.input).and_then(|doc| run_classify(&doc, *jet, *arith))
        }
        Command::Normalize { field, order, mode, arith } => {
            read_field_doc(&field.input).and_then(|doc| run_normalize(&doc, *order, *mode, *arith))
        }
        Command::Leafmap {
            field,
            order,
            theta,
            opening,
            radius,
            grid_x,
            rays,
            random,
            csv,
        } => read_field_doc(&field.input).and_then(|doc| {
            let (summary, table) = run_leafmap(
                &doc, *order, *theta, *opening, *radius, *grid_x, *rays, *random, seed,
            )?;
            match csv {
                Some(path) => {
                    std::fs::write(path, table).map_err(|e| Failure::new("WriteError", e))?;
                    Ok(summary)
                }
                None => {
                    print!("{table}");
                    Ok(summary)
                }
            }
        }),
        Command::BorelSum { coeffs, theta, x, pade, jump } => {
            run_borel_sum(coeffs, *theta, *x, pade.clone(), *jump)
        }
        Command::Stokes { field, order, nmax, worder, x_radius, x_offset, tol, csv } => {
            read_field_doc(&field.input).and_then(|doc| {
                run_stokes(&doc, *order, *nmax, *worder, *x_radius, *x_offset, *tol, csv.clone())
            })
        }
    };

    let (payload, code) = match result {
        Ok(v) => {
            let mut root = json!({ "schema_version": 1 });
            root.as_object_mut().unwrap().insert("result".into(), v);
            (root, 0)
        }
        Err(f) => (
            json!({
                "schema_version": 1,
                "error": { "name": f.name, "message": f.message },
            }),
            1,
        ),
    };
    let text = serde_json::to_string_pretty(&payload).expect("report serializes");
    match &cli.out {
        Some(path) => {
            if std::fs::write(path, text).is_err() {
                eprintln!("failed to write report to {}", path.display());
                std::process::exit(2);
            }
        }
        None => println!("{text}"),
    }
    std::process::exit(code);
}
