use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use prior_distill::harness::fixtures::{
    backbone_descent, backbone_descent_fixture, context_witness, geometry_matched_batch, relational_descent,
    relational_descent_fixture, two_image_batch, BACKBONE_DESCENT_LR, RELATIONAL_DESCENT_LR,
};
use prior_distill::harness::{calibration_report, run_gradcheck, synth_block_features, GradTarget, SynthConfig};
use prior_distill::{backbone_loss, fuse_pipeline, relational_distill_loss, MuParam};

use crate::args::{Command, ConfigArgs, FixtureName, Preset, Problem};
use crate::config::{split_assignment, CliConfig};
use crate::error::{CliError, Result};
use crate::files::{
    create_dir, load_batch, load_feature_map, read_labels, save_batch, save_feature_map, save_mask, save_matrix,
    write_labels, write_text,
};

fn resolve(args: &ConfigArgs, synth: SynthConfig, extra: Vec<(String, String)>) -> Result<CliConfig> {
    let mut flags = args.set.iter().map(|s| split_assignment(s)).collect::<Result<Vec<_>>>()?;
    flags.extend(extra);
    CliConfig::resolve(synth, args.config.as_deref(), &flags)
}

fn flag(key: &str, value: Option<String>) -> Vec<(String, String)> {
    value.map(|v| (key.to_string(), v)).into_iter().collect()
}

/// Runs one command and returns what it prints on standard output.
pub fn run(command: Command) -> Result<String> {
    let mut out = String::new();
    match command {
        Command::Fuse { struct_path, sem, out: out_path, dump_diagnostics, strategy, config } => {
            let cfg = resolve(&config, SynthConfig::default(), flag("fusion.strategy", strategy))?;
            let f_struct = load_feature_map(&struct_path)?;
            let f_sem = load_feature_map(&sem)?;
            let fused = fuse_pipeline(&f_struct, &f_sem, &cfg.fusion)?;
            save_feature_map(&out_path, &fused.fused)?;
            if let Some(dir) = dump_diagnostics {
                let d = &fused.diagnostics;
                create_dir(&dir)?;
                save_matrix(&dir.join("S.dsdp"), d.similarity.data())?;
                save_mask(&dir.join("M.dsdp"), d.mask.data())?;
                save_matrix(&dir.join("A.dsdp"), d.attention.data())?;
                write_text(&dir.join("diagnostics.txt"), &d.report())?;
            }
            writeln!(out, "strategy = {}", cfg.fusion.strategy.as_str()).unwrap();
            out.push_str(&fused.diagnostics.report());
        }
        Command::BackboneLoss { teacher, student, grad_out, config } => {
            let cfg = resolve(&config, SynthConfig::default(), Vec::new())?;
            let r = backbone_loss(&load_feature_map(&teacher)?, &load_feature_map(&student)?, &cfg.backbone)?;
            if let Some(path) = grad_out {
                save_matrix(&path, &r.total.grad_student)?;
            }
            writeln!(out, "total = {}\ncosine = {}\nattn = {}", r.total.value, r.cosine, r.attn).unwrap();
            writeln!(out, "grad_norm = {}", r.total.grad_norm()).unwrap();
        }
        Command::RelationalLoss { batch, scope, rho, grad_out, config } => {
            let mut extra = flag("relational.scope", scope);
            extra.extend(flag("relational.rho", rho.map(|r| r.to_string())));
            let cfg = resolve(&config, SynthConfig::default(), extra)?;
            let instances = load_batch(&batch)?;
            let mu = MuParam::new(cfg.rho);
            let r = relational_distill_loss(&instances, mu, cfg.scope)?;
            if let Some(path) = grad_out {
                let d = instances[0].dim();
                let g = Array2::from_shape_vec((instances.len(), d), r.grad_fc.concat()).expect("uniform");
                save_matrix(&path, &g)?;
            }
            writeln!(out, "scope = {}\nrho = {}\nmu = {}", cfg.scope, cfg.rho, mu.mu()).unwrap();
            writeln!(out, "value = {}\npair_count = {}\ngrad_rho = {}", r.value, r.pair_count, r.grad_rho).unwrap();
        }
        Command::Gradcheck { target, seeds, first_seed, perturb_analytic } => {
            let target: GradTarget = target.parse()?;
            let (mut failures, mut worst, mut worst_seed) = (0u64, 0.0f64, first_seed);
            for seed in first_seed..first_seed + seeds {
                let r = run_gradcheck(target, seed, perturb_analytic)?;
                if !r.passed {
                    failures += 1;
                }
                if r.max_rel_error > worst {
                    (worst, worst_seed) = (r.max_rel_error, seed);
                }
            }
            writeln!(out, "target = {target}\nseeds = {seeds}\nfailures = {failures}").unwrap();
            writeln!(out, "max_rel_error = {worst}\nworst_seed = {worst_seed}").unwrap();
            if failures > 0 {
                return Err(CliError::GradcheckFailed(out));
            }
        }
        Command::Synth { preset, seed, out: dir, config } => {
            let base = match preset {
                Preset::Standard => SynthConfig::standard(0),
                Preset::Clean => SynthConfig::clean(0),
                Preset::Outliers => SynthConfig::outliers(0),
            };
            let cfg = resolve(&config, base, flag("synth.seed", seed.map(|s| s.to_string())))?;
            let fx = synth_block_features(&cfg.synth)?;
            create_dir(&dir)?;
            save_feature_map(&dir.join("struct.dsdp"), &fx.f_struct)?;
            save_feature_map(&dir.join("sem.dsdp"), &fx.f_sem)?;
            let clusters: Vec<String> = fx.labels.iter().map(|c| c.to_string()).collect();
            let image = format!("synth{}", cfg.synth.seed);
            write_labels(&dir.join("labels.tsv"), clusters.iter().map(|c| (image.as_str(), c.as_str())))?;
            let outliers: String =
                fx.is_outlier.iter().enumerate().filter(|(_, &o)| o).map(|(i, _)| format!("{i}\n")).collect();
            write_text(&dir.join("outliers.txt"), &outliers)?;
            writeln!(
                out,
                "patches = {}\noutliers = {}\nseed = {}",
                fx.labels.len(),
                cfg.synth.outlier_count,
                cfg.synth.seed
            )
            .unwrap();
        }
        Command::Fixture { name, seed, out: dir } => {
            match name {
                FixtureName::Witness => {
                    let (st, se) = context_witness()?;
                    create_dir(&dir)?;
                    save_feature_map(&dir.join("struct.dsdp"), &st)?;
                    save_feature_map(&dir.join("sem.dsdp"), &se)?;
                }
                FixtureName::Geometry => save_batch(&dir, &geometry_matched_batch()?)?,
                FixtureName::TwoImage => save_batch(&dir, &two_image_batch()?)?,
                FixtureName::RelationalDescent => save_batch(&dir, &relational_descent_fixture(seed)?)?,
                FixtureName::BackboneDescent => {
                    let (t, s) = backbone_descent_fixture(seed)?;
                    create_dir(&dir)?;
                    save_feature_map(&dir.join("teacher.dsdp"), &t)?;
                    save_feature_map(&dir.join("student.dsdp"), &s)?;
                }
            }
            writeln!(out, "fixture = {}", dir.display()).unwrap();
        }
        Command::Calibration { sem, fused, labels, records } => {
            let f_sem = load_feature_map(&sem)?;
            let f_fused = load_feature_map(&fused)?;
            let clusters = cluster_ids(&labels)?;
            let r = calibration_report(&f_sem, &f_fused, &clusters)?;
            out.push_str(&r.to_key_values());
            if records {
                out.push_str(&r.to_records());
            }
        }
        Command::Descent { problem, seed, trajectory_out, config } => {
            let cfg = resolve(&config, SynthConfig::default(), Vec::new())?;
            let tuned = match problem {
                Problem::Relational => RELATIONAL_DESCENT_LR,
                Problem::Backbone => BACKBONE_DESCENT_LR,
            };
            let dcfg = prior_distill::harness::DescentConfig {
                learning_rate: cfg.learning_rate.unwrap_or(tuned),
                ..cfg.descent.clone()
            };
            let d = match problem {
                Problem::Relational => relational_descent(seed, &dcfg)?,
                Problem::Backbone => backbone_descent(seed, &cfg.backbone, &dcfg)?,
            };
            if let Some(path) = trajectory_out {
                let text: String = d.trajectory.iter().map(|(s, v)| format!("{s}\t{v}\n")).collect();
                write_text(&path, &text)?;
            }
            writeln!(out, "learning_rate = {}\nsteps = {}", dcfg.learning_rate, dcfg.steps).unwrap();
            writeln!(out, "initial = {}\nfinal = {}\nreduction = {}", d.initial(), d.last(), d.reduction()).unwrap();
        }
        Command::ShowConfig { config } => {
            out.push_str(&resolve(&config, SynthConfig::default(), Vec::new())?.render());
        }
    }
    Ok(out)
}

/// Category ids of a label sidecar mapped to dense cluster indices in sorted order.
fn cluster_ids(path: &Path) -> Result<Vec<usize>> {
    let labels = read_labels(path)?;
    let mut ids = BTreeMap::new();
    for (_, c) in &labels {
        ids.entry(c.clone()).or_insert(0usize);
    }
    for (i, v) in ids.values_mut().enumerate() {
        *v = i;
    }
    Ok(labels.iter().map(|(_, c)| ids[c]).collect())
}
