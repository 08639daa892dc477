use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::arch_space::{
    decode_decimal, digit_to_bits, enumerate_space, format_digits, parse_digits, to_dot, validate,
    ArchJson, ArchitectureSequence, SearchSpaceConfig,
};
use crate::child_net::{build, SharedWeightBank};
use crate::controller::Controller;
use crate::error::Error;
use crate::numeric::Tensor;
use crate::param_count::{count_params, PenaltyModel};
use crate::rng::{stream_rng, Stream};
use crate::sr_data::{load_dataset, load_pnm, psnr, upsample_bicubic, Dataset, ImagePair};
use crate::trainer::{
    final_train, reward_csv, search, select_best, surrogate_argmax, RewardMode, RewardRecord, RewardSource,
    Surrogate,
};

use super::{ArchArgs, Cli, CliError, Command, RunConfig};

type CmdResult = Result<(), CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::from(Error::Config(msg.into()))
}

pub(super) fn dispatch(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let mut cfg = cli.common.resolve()?;
    match &cli.command {
        Command::Search => cmd_search(&cfg, out, None),
        Command::SurrogateSearch { limit } => {
            cfg.trainer.reward_mode = RewardMode::Surrogate;
            cmd_search(&cfg, out, Some(*limit))
        }
        Command::Sample { checkpoint, bank } => cmd_sample(&cfg, checkpoint.as_deref(), bank.as_deref(), out, err),
        Command::Train { arch } => {
            let arch = resolve_arch(&mut cfg, arch)?;
            cmd_train(&cfg, &arch, out)
        }
        Command::Eval {
            arch,
            checkpoint,
            pred,
            target,
            split,
        } => cmd_eval(&mut cfg, arch, checkpoint.as_deref(), pred.as_deref(), target.as_deref(), split, out),
        Command::Count { arch, json } => {
            let a = resolve_arch(&mut cfg, arch)?;
            let breakdown = count_params(&a, &cfg.space)?;
            if *json {
                writeln!(out, "{}", serde_json::to_string_pretty(&breakdown).map_err(Error::from)?)?;
            } else {
                write!(out, "{}", breakdown.to_csv())?;
            }
            Ok(())
        }
        Command::Enumerate { limit } => {
            let iter = enumerate_space(&cfg.space, *limit).map_err(|e| match e {
                Error::SpaceTooLarge { size, limit } => usage(format!(
                    "the space holds {size} architectures (2^{}), above --limit {limit}",
                    cfg.space.decision_count()
                )),
                other => CliError::from(other),
            })?;
            for arch in iter {
                let j = ArchJson::from_arch(&arch, &cfg.space)?;
                writeln!(
                    out,
                    "{}",
                    serde_json::json!({
                        "digits": j.digits,
                        "local_fusion": j.local_fusion,
                        "global_fusion": j.global_fusion,
                    })
                )?;
            }
            Ok(())
        }
        Command::Decode { arch, dot, braces } => {
            let a = resolve_arch(&mut cfg, arch)?;
            if *dot {
                write!(out, "{}", to_dot(&a, &cfg.space)?)?;
            } else if *braces {
                for block in &a.mix {
                    let bits: Vec<&str> = block.iter().map(|&b| if b { "1" } else { "0" }).collect();
                    writeln!(out, "{{{}}}", bits.join(","))?;
                }
            } else {
                writeln!(out, "{}", decode_json(&a, &cfg.space)?)?;
            }
            Ok(())
        }
    }
}

fn decode_json(arch: &ArchitectureSequence, space: &SearchSpaceConfig) -> Result<String, Error> {
    let j = ArchJson::from_arch(arch, space)?;
    let blocks: Vec<Vec<u8>> = j
        .digits
        .iter()
        .map(|&d| digit_to_bits(d, space.num_ops).into_iter().map(u8::from).collect())
        .collect();
    let ops: Vec<&str> = space.op_list.iter().map(|o| o.name()).collect();
    Ok(serde_json::json!({
        "digits": j.digits,
        "blocks": blocks,
        "local_fusion": j.local_fusion,
        "global_fusion": j.global_fusion,
        "M": space.mix_nodes,
        "K": space.num_ops,
        "ops": ops,
    })
    .to_string())
}

fn parse_gates(text: &str, len: usize, what: &str) -> Result<Vec<bool>, Error> {
    let bits: Vec<bool> = text
        .chars()
        .filter(|c| !matches!(c, ',' | ' '))
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            other => Err(Error::Validation(format!("{what} gates: {other:?} is not a bit"))),
        })
        .collect::<Result<_, _>>()?;
    if bits.len() != len {
        return Err(Error::Validation(format!("{what} gates: expected {len} bits, got {}", bits.len())));
    }
    Ok(bits)
}

/// Builds the genome from `--digits` and gate flags, inferring `M` from the
/// digit count when it was not set.
fn resolve_arch(cfg: &mut RunConfig, args: &ArchArgs) -> Result<ArchitectureSequence, CliError> {
    let text = args.digits.as_deref().ok_or_else(|| usage("--digits is required"))?;
    let digits = parse_digits(text)?;
    cfg.fit_digits(digits.len())?;
    let mut arch = decode_decimal(&digits, &cfg.space)?;
    let gates_given = args.local_gates.is_some() || args.global_gates.is_some();
    if gates_given && !cfg.space.fusion_search {
        return Err(usage("gate flags need fusion search (--fusion)"));
    }
    if let Some(g) = &args.local_gates {
        arch.local_fusion = parse_gates(g, cfg.space.mix_nodes, "local")?;
    }
    if let Some(g) = &args.global_gates {
        arch.global_fusion = parse_gates(g, cfg.space.num_blocks, "global")?;
    }
    validate(&arch, &cfg.space).into_result()?;
    Ok(arch)
}

fn load_data(cfg: &RunConfig) -> Result<Dataset, CliError> {
    let source = cfg.data_source()?;
    load_dataset(&source, cfg.space.scale, cfg.synth_spec()).map_err(|e| match e {
        Error::Config(m) => usage(format!("--data: {m}")),
        other => CliError::from(other),
    })
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| usage(format!("--out {}: {e}", dir.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn cmd_search(cfg: &RunConfig, out: &mut dyn Write, brute_limit: Option<u128>) -> CmdResult {
    let data = match cfg.trainer.reward_mode {
        RewardMode::Psnr => Some(load_data(cfg)?),
        RewardMode::Surrogate => None,
    };
    prepare_out(&cfg.out)?;
    let outcome = search(
        &cfg.space,
        &cfg.trainer,
        cfg.seed,
        data.as_ref(),
        Some(&cfg.out),
        cfg.deterministic,
    )?;
    fs::write(cfg.out.join("rewards.csv"), reward_csv(&outcome.records))?;
    write_json(&cfg.out.join("report.json"), &outcome.report)?;
    write_json(&cfg.out.join("selected.json"), &ArchJson::from_arch(&outcome.selected, &cfg.space)?)?;
    fs::write(cfg.out.join("selected.dot"), to_dot(&outcome.selected, &cfg.space)?)?;
    let sel = &outcome.report.selected;
    writeln!(out, "epochs: {}", outcome.report.epochs_run)?;
    writeln!(out, "records: {}", outcome.records.len())?;
    writeln!(out, "selected: {}", format_digits(&sel.digits))?;
    writeln!(out, "selected_reward: {}", sel.reward)?;
    writeln!(out, "selected_params: {}", sel.n_params)?;
    if let Some(limit) = brute_limit {
        let surrogate = Surrogate::new(&cfg.space, cfg.seed, cfg.trainer.surrogate_scale);
        match surrogate_argmax(&cfg.space, &surrogate, cfg.trainer.alpha, limit) {
            Ok((best, _)) => {
                let best_digits = crate::arch_space::encode_decimal(&best, &cfg.space)?;
                writeln!(out, "brute_force: {}", format_digits(&best_digits))?;
                writeln!(out, "matches_brute_force: {}", best == outcome.selected)?;
            }
            Err(Error::SpaceTooLarge { size, .. }) => {
                writeln!(out, "brute_force: skipped ({size} architectures)")?;
            }
            Err(e) => return Err(e.into()),
        }
    }
    writeln!(out, "output: {}", cfg.out.display())?;
    Ok(())
}

#[derive(Serialize)]
struct CandidateLine<'a> {
    digits: &'a [u32],
    local_fusion: Vec<u8>,
    global_fusion: Vec<u8>,
    log_prob: f64,
    quality: f64,
    n_params: usize,
    reward: f64,
}

fn candidate_line<'a>(log_prob: f64, r: &'a RewardRecord) -> CandidateLine<'a> {
    CandidateLine {
        digits: &r.digits,
        local_fusion: r.local_fusion.iter().map(|&b| b as u8).collect(),
        global_fusion: r.global_fusion.iter().map(|&b| b as u8).collect(),
        log_prob,
        quality: r.psnr,
        n_params: r.n_params,
        reward: r.reward,
    }
}

fn cmd_sample(
    cfg: &RunConfig,
    checkpoint: Option<&Path>,
    bank_path: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> CmdResult {
    let path = checkpoint.ok_or_else(|| usage("--checkpoint is required"))?;
    if !path.is_file() {
        return Err(usage(format!("--checkpoint {} does not exist", path.display())));
    }
    let controller = Controller::load(path)?;
    let space = controller.space().clone();
    let penalty = PenaltyModel::new(&space)?;
    let surrogate = Surrogate::new(&space, cfg.seed, cfg.trainer.surrogate_scale);
    let loaded;
    let source = match cfg.trainer.reward_mode {
        RewardMode::Surrogate => RewardSource::Surrogate(&surrogate),
        RewardMode::Psnr => {
            let bp = bank_path.ok_or_else(|| usage("PSNR rewards need --bank (or use --reward surrogate)"))?;
            if !bp.is_file() {
                return Err(usage(format!("--bank {} does not exist", bp.display())));
            }
            let bank = SharedWeightBank::load(bp)?;
            let data = load_data(cfg)?;
            let n = cfg.trainer.val_subset.min(data.val.len());
            loaded = (bank, data.val[..n].to_vec());
            RewardSource::Psnr {
                bank: &loaded.0,
                val: &loaded.1,
            }
        }
    };
    let mut rng = stream_rng(cfg.seed, Stream::Selection);
    let (best, candidates) = select_best(
        &controller,
        source,
        &penalty,
        cfg.trainer.alpha,
        cfg.trainer.candidate_pool,
        &mut rng,
    )?;
    for c in &candidates {
        writeln!(
            out,
            "{}",
            serde_json::to_string(&candidate_line(c.log_prob, &c.record)).map_err(Error::from)?
        )?;
    }
    let digits = crate::arch_space::encode_decimal(&best, &space)?;
    writeln!(err, "selected: {}", format_digits(&digits))?;
    prepare_out(&cfg.out)?;
    write_json(&cfg.out.join("best.json"), &ArchJson::from_arch(&best, &space)?)?;
    Ok(())
}

fn cmd_train(cfg: &RunConfig, arch: &ArchitectureSequence, out: &mut dyn Write) -> CmdResult {
    let data = load_data(cfg)?;
    prepare_out(&cfg.out)?;
    let (bank, report) = final_train(arch, &cfg.space, &cfg.trainer, &data, cfg.seed)?;
    fs::write(cfg.out.join("history.csv"), report.history_csv())?;
    write_json(&cfg.out.join("final.json"), &report)?;
    write_json(&cfg.out.join("arch.json"), &ArchJson::from_arch(arch, &cfg.space)?)?;
    bank.save(&cfg.out.join("model.ckpt"), cfg.deterministic)?;
    writeln!(out, "steps: {}", report.steps)?;
    writeln!(out, "params: {}", report.n_params)?;
    writeln!(out, "bicubic_psnr: {}", report.bicubic_val_psnr)?;
    writeln!(out, "final_psnr: {}", report.final_val_psnr)?;
    writeln!(out, "best_psnr: {}", report.best_val_psnr)?;
    Ok(())
}

fn image_files(path: &Path) -> Result<Vec<PathBuf>, CliError> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "ppm" || x == "pgm"))
            .collect();
        files.sort();
        Ok(files)
    } else if path.is_file() {
        Ok(vec![path.to_path_buf()])
    } else {
        Err(usage(format!("{} does not exist", path.display())))
    }
}

fn cmd_eval(
    cfg: &mut RunConfig,
    arch_args: &ArchArgs,
    checkpoint: Option<&Path>,
    pred: Option<&Path>,
    target: Option<&Path>,
    split: &str,
    out: &mut dyn Write,
) -> CmdResult {
    match (pred, target) {
        (Some(p), Some(t)) => {
            let preds = image_files(p)?;
            let targets = image_files(t)?;
            writeln!(out, "file,psnr")?;
            for pf in preds {
                let tf = if t.is_dir() {
                    t.join(pf.file_name().expect("listed files have names"))
                } else {
                    targets[0].clone()
                };
                if !tf.is_file() {
                    return Err(usage(format!("--target has no counterpart for {}", pf.display())));
                }
                let v = psnr(&load_pnm(&pf)?, &load_pnm(&tf)?)?;
                writeln!(out, "{},{}", pf.file_name().unwrap_or_default().to_string_lossy(), v)?;
            }
            return Ok(());
        }
        (None, None) => {}
        _ => return Err(usage("--pred and --target must be given together")),
    }
    let data = load_data(cfg)?;
    let images: &[ImagePair] = match split {
        "val" => &data.val,
        "train" => &data.train,
        other => return Err(usage(format!("--split {other:?} is neither val nor train"))),
    };
    if images.is_empty() {
        return Err(CliError::from(Error::Data(format!("the {split} split is empty"))));
    }
    let mut bicubic = 0.0;
    for p in images {
        bicubic += psnr(&upsample_bicubic(&p.lr, cfg.space.scale)?, &p.hr)?;
    }
    writeln!(out, "method,psnr")?;
    writeln!(out, "bicubic,{}", bicubic / images.len() as f64)?;
    if let Some(ck) = checkpoint {
        if !ck.is_file() {
            return Err(usage(format!("--checkpoint {} does not exist", ck.display())));
        }
        let bank = SharedWeightBank::load(ck)?;
        cfg.space = bank.config().clone();
        cfg.mix_nodes_explicit = true;
        let arch = resolve_arch(cfg, arch_args)?;
        let net = build(&arch, &cfg.space, &bank)?;
        let mut total = 0.0;
        for p in images {
            let lr = Tensor::stack(std::slice::from_ref(&p.lr))?;
            let sr = net.predict(&lr)?.map(|v| v.clamp(0.0, 1.0)).batch_item(0)?;
            let hr = Tensor::stack(std::slice::from_ref(&p.hr))?.batch_item(0)?;
            total += psnr(&sr, &hr)?;
        }
        writeln!(out, "model,{}", total / images.len() as f64)?;
    }
    Ok(())
}
