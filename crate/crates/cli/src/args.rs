use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "prior-distill", version, about = "Teacher feature fusion and prior distillation losses")]
pub struct Cli {
    /// Worker threads for the parallel kernels (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one config key; repeatable, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    Standard,
    Clean,
    Outliers,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FixtureName {
    /// Structural/semantic pair where one patch's outlier status depends on context.
    Witness,
    /// Relational batch whose loss is exactly zero.
    Geometry,
    /// Four instances over two images.
    TwoImage,
    /// Eight-instance, four-category batch used for descent.
    RelationalDescent,
    /// Teacher/student pair used for backbone descent.
    BackboneDescent,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Problem {
    Relational,
    Backbone,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fuse semantic features under structural attention.
    Fuse {
        #[arg(long = "struct")]
        struct_path: PathBuf,
        #[arg(long)]
        sem: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write S.dsdp, M.dsdp, A.dsdp and diagnostics.txt here.
        #[arg(long)]
        dump_diagnostics: Option<PathBuf>,
        #[arg(long, value_parser = ["saod", "global-lof", "none"])]
        strategy: Option<String>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Cosine plus attention-KL loss between teacher and student features.
    BackboneLoss {
        #[arg(long)]
        teacher: PathBuf,
        #[arg(long)]
        student: PathBuf,
        /// Write the gradient with respect to the student.
        #[arg(long)]
        grad_out: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Instance-level distillation loss over a batch directory.
    RelationalLoss {
        #[arg(long)]
        batch: PathBuf,
        #[arg(long, value_parser = ["point", "image", "batch"])]
        scope: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        rho: Option<f64>,
        /// Write the gradient with respect to f_c.
        #[arg(long)]
        grad_out: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Compare analytic gradients with central finite differences.
    Gradcheck {
        #[arg(long, value_parser = ["cosine", "attn", "point", "relational"])]
        target: String,
        #[arg(long, default_value_t = 50)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        first_seed: u64,
        #[arg(long, hide = true, default_value_t = 0.0, allow_hyphen_values = true)]
        perturb_analytic: f64,
    },
    /// Write a seeded block-structured feature pair.
    Synth {
        #[arg(long, value_enum, default_value_t = Preset::Standard)]
        preset: Preset,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Write one of the hand-built fixtures.
    Fixture {
        #[arg(long, value_enum)]
        name: FixtureName,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Intra-cluster spread of semantic features before and after fusion.
    Calibration {
        #[arg(long)]
        sem: PathBuf,
        #[arg(long)]
        fused: PathBuf,
        /// Label sidecar; the category column is the cluster.
        #[arg(long)]
        labels: PathBuf,
        /// Also print one record per cluster.
        #[arg(long)]
        records: bool,
    },
    /// Fixed-step gradient descent on a built-in problem.
    Descent {
        #[arg(long, value_enum)]
        problem: Problem,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write `step<TAB>value` lines.
        #[arg(long)]
        trajectory_out: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Print the effective configuration.
    ShowConfig {
        #[command(flatten)]
        config: ConfigArgs,
    },
}
