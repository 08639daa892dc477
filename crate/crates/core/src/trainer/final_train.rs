use serde::{Deserialize, Serialize};

use crate::arch_space::{ArchitectureSequence, SearchSpaceConfig};
use crate::child_net::{build, SharedWeightBank};
use crate::error::{Error, Result};
use crate::numeric::{adam_step, Adam, Graph};
use crate::param_count::count_params;
use crate::rng::{stream_rng, stream_seed, Stream};
use crate::sr_data::{bicubic_baseline_psnr, extract_patches, psnr_batch, Dataset};

use super::reward::evaluate_psnr;
use super::TrainerConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub step: usize,
    pub lr: f64,
    /// Mean training loss since the previous row.
    pub loss: Option<f64>,
    /// Mean training-batch PSNR since the previous row.
    pub train_psnr: Option<f64>,
    pub val_psnr: f64,
    pub best_val_psnr: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FinalReport {
    pub steps: usize,
    pub n_params: usize,
    pub bicubic_val_psnr: f64,
    pub final_val_psnr: f64,
    pub best_val_psnr: f64,
    pub history: Vec<HistoryRow>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl FinalReport {
    pub fn history_csv(&self) -> String {
        let mut s = String::from("step,lr,loss,train_psnr,val_psnr,best_val_psnr\n");
        for r in &self.history {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.step,
                r.lr,
                opt(r.loss),
                opt(r.train_psnr),
                r.val_psnr,
                r.best_val_psnr
            ));
        }
        s
    }
}

/// Trains `arch` from a freshly initialised bank for `trainer.final_steps`
/// Adam steps, scoring the full validation split every `eval_interval` steps.
pub fn final_train(
    arch: &ArchitectureSequence,
    space: &SearchSpaceConfig,
    trainer: &TrainerConfig,
    data: &Dataset,
    seed: u64,
) -> Result<(SharedWeightBank, FinalReport)> {
    trainer.check()?;
    if data.train.is_empty() || data.val.is_empty() {
        return Err(Error::Data("final training needs training and validation images".into()));
    }
    let mut bank = SharedWeightBank::new(space, stream_seed(seed, Stream::Bank))?;
    let n_params = count_params(arch, space)?.total;
    let bicubic = bicubic_baseline_psnr(&data.val, space.scale)?;
    let mut rng = stream_rng(seed, Stream::Augment);

    let initial = evaluate_psnr(arch, space, &bank, &data.val)?;
    let mut history = vec![HistoryRow {
        step: 0,
        lr: trainer.final_lr,
        loss: None,
        train_psnr: None,
        val_psnr: initial,
        best_val_psnr: initial,
    }];
    let mut best = initial;
    let mut last = initial;
    let (mut loss_sum, mut psnr_sum, mut since) = (0.0, 0.0, 0usize);

    for step in 1..=trainer.final_steps {
        let lr = TrainerConfig::halved(trainer.final_lr, trainer.final_lr_halving_interval, step - 1);
        let batch = extract_patches(
            &data.train,
            trainer.patch_size,
            trainer.batch_size,
            space.scale,
            &mut rng,
            trainer.augment,
        )?;
        let net = build(arch, space, &bank)?;
        let mut g = Graph::new();
        let x = g.constant(batch.lr.clone());
        let y = g.constant(batch.hr.clone());
        let pred = net.forward(&mut g, x)?;
        let loss = g.l1_loss(pred, y)?;
        g.backward(loss)?;
        loss_sum += g.value(loss).data()[0];
        psnr_sum += psnr_batch(&g.value(pred).map(|v| v.clamp(0.0, 1.0)), &batch.hr)?;
        since += 1;
        let grads = g.param_grads();
        drop(g);
        adam_step(bank.store_mut(), &grads, &Adam::with_lr(lr))?;

        if step % trainer.eval_interval == 0 || step == trainer.final_steps {
            last = evaluate_psnr(arch, space, &bank, &data.val)?;
            best = best.max(last);
            history.push(HistoryRow {
                step,
                lr,
                loss: Some(loss_sum / since as f64),
                train_psnr: Some(psnr_sum / since as f64),
                val_psnr: last,
                best_val_psnr: best,
            });
            (loss_sum, psnr_sum, since) = (0.0, 0.0, 0);
        }
    }

    let report = FinalReport {
        steps: trainer.final_steps,
        n_params,
        bicubic_val_psnr: bicubic,
        final_val_psnr: last,
        best_val_psnr: best,
        history,
    };
    Ok((bank, report))
}
