//! Command-line interface.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{Config, Profile};
use crate::dataset::{self, attach_pseudo_gold, read_jsonl, Example, OracleRecord};
use crate::dsl::{ActionSequence, MaskKind, MaskTableSpec, MaskToken};
use crate::eval::{self, top_beam, EvalMode};
use crate::executor::{execute_traced, write_trace};
use crate::kb::KnowledgeBase;
use crate::memory::MemoryBuffer;
use crate::policy::Policy;
use crate::search::bfs_search;
use crate::synth::{generate_corpus, generate_kb, SynthConfig};
use crate::trainer::{pretrain, train_rl, write_log_csv, RlEnv};

#[derive(Debug, Parser)]
#[command(name = "kbqa", version, about = "Program-induction question answering over a small knowledge base")]
pub struct Cli {
    /// JSON file with `executor`, `reward`, `policy` and `train` sections.
    #[arg(long, global = true, env = "KBQA_CONFIG")]
    pub config: Option<PathBuf>,
    /// Defaults the config file is layered over.
    #[arg(long, global = true, value_enum, default_value_t = Profile::Desk)]
    pub profile: Profile,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct KbArgs {
    /// Tab-separated `subject predicate object` lines.
    #[arg(long)]
    pub triples: PathBuf,
    /// Tab-separated `entity type` lines.
    #[arg(long)]
    pub types: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Split {
    All,
    Train,
    Heldout,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and index a knowledge base, then print its size.
    LoadKb {
        #[command(flatten)]
        kb: KbArgs,
    },
    /// Write a synthetic knowledge base and question set.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 250)]
        questions: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Search for programs reproducing each gold answer.
    Oracle {
        #[command(flatten)]
        kb: KbArgs,
        #[arg(long)]
        data: PathBuf,
        /// Maximum program length in actions, EOQ included.
        #[arg(long, default_value_t = 5)]
        max_len: usize,
        /// Programs kept per question.
        #[arg(long, default_value_t = 20)]
        limit: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Teacher-forcing pretraining on pseudo-gold programs.
    Pretrain {
        #[command(flatten)]
        kb: KbArgs,
        #[arg(long)]
        data: PathBuf,
        /// Oracle output whose programs replace those in the data file.
        #[arg(long)]
        oracle: Option<PathBuf>,
        /// Number of training-split questions used.
        #[arg(long, default_value_t = 50)]
        max_questions: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Directory for per-epoch checkpoints.
        #[arg(long)]
        checkpoint_dir: Option<PathBuf>,
    },
    /// REINFORCE fine-tuning from a pretrained checkpoint.
    TrainRl {
        #[command(flatten)]
        kb: KbArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Plain policy gradient: no reward bonus and no memory buffer.
        #[arg(long)]
        pg: bool,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch CSV log.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        checkpoint_dir: Option<PathBuf>,
    },
    /// Score a checkpoint (or the pseudo-gold programs) on a dataset.
    Eval {
        #[command(flatten)]
        kb: KbArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, required_unless_present = "oracle_mode")]
        checkpoint: Option<PathBuf>,
        /// Execute each question's first pseudo-gold program instead of the policy.
        #[arg(long)]
        oracle_mode: bool,
        /// Oracle output merged into the data before scoring.
        #[arg(long)]
        oracle: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Split::All)]
        split: Split,
        /// JSON report path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-question JSONL predictions.
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Answer one question and print the execution trace.
    Answer {
        #[command(flatten)]
        kb: KbArgs,
        /// Mask binding such as `<E1>=India`, `<P1>=flow` or `<E3>=4`.
        #[arg(long = "mask", required = true)]
        masks: Vec<String>,
        /// Program to execute, e.g. `Select(<E1>,<P1>,<T1>) | EOQ`.
        #[arg(long, conflicts_with_all = ["checkpoint", "question"])]
        program: Option<String>,
        #[arg(long, requires = "question")]
        checkpoint: Option<PathBuf>,
        /// Whitespace-separated question with inline masks.
        #[arg(long, requires = "checkpoint")]
        question: Option<String>,
    },
}

fn load_kb(args: &KbArgs) -> Result<KnowledgeBase> {
    KnowledgeBase::load(&args.triples, &args.types).context("loading knowledge base")
}

fn load_config(cli: &Cli) -> Result<Config> {
    let base = Config::profile(cli.profile);
    match &cli.config {
        Some(p) => Ok(Config::load(p, &base)?),
        None => Ok(base),
    }
}

fn load_data(path: &Path, kb: &KnowledgeBase, oracle: Option<&Path>) -> Result<Vec<Example>> {
    let mut data = dataset::load_examples(path, kb)?;
    if let Some(o) = oracle {
        let recs: Vec<OracleRecord> = read_jsonl(o)?;
        attach_pseudo_gold(&mut data, &recs)?;
    }
    Ok(data)
}

fn select_split(data: Vec<Example>, split: Split) -> Vec<Example> {
    let (train, held) = dataset::split(&data);
    match split {
        Split::All => data,
        Split::Train => train,
        Split::Heldout => held,
    }
}

fn with_seed(cfg: &mut Config, seed: Option<u64>) {
    if let Some(s) = seed {
        cfg.train.seed = s;
        cfg.policy.seed = s;
    }
}

fn mask_spec(kb: &KnowledgeBase, bindings: &[String]) -> Result<MaskTableSpec> {
    let mut spec = MaskTableSpec::default();
    for b in bindings {
        let (m, label) = b
            .split_once('=')
            .ok_or_else(|| anyhow!("mask binding `{b}` is not of the form <X1>=label"))?;
        let mask: MaskToken = m.trim().parse()?;
        let label = label.trim().to_owned();
        let key = mask.to_string();
        match mask.kind {
            MaskKind::Entity => match (kb.entity(&label), label.parse::<i64>()) {
                (None, Ok(n)) => {
                    spec.numbers.insert(key, n);
                }
                _ => {
                    spec.entities.insert(key, label);
                }
            },
            MaskKind::Predicate => {
                spec.predicates.insert(key, label);
            }
            MaskKind::Type => {
                spec.types.insert(key, label);
            }
        }
    }
    Ok(spec)
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::LoadKb { kb } => {
            let kb = load_kb(&kb)?;
            writeln!(
                out,
                "triples {}\nentities {}\npredicates {}\ntypes {}",
                kb.num_triples(),
                kb.num_entities(),
                kb.num_predicates(),
                kb.num_types()
            )?;
        }
        Command::Synth {
            out_dir,
            questions,
            seed,
        } => {
            std::fs::create_dir_all(&out_dir)?;
            let kb = generate_kb(&SynthConfig {
                seed,
                ..SynthConfig::default()
            });
            let (triples, types) = kb.to_tsv();
            std::fs::write(out_dir.join("kb.triples.tsv"), triples)?;
            std::fs::write(out_dir.join("kb.types.tsv"), types)?;
            let data = generate_corpus(&kb, questions, seed);
            dataset::save_examples(&out_dir.join("questions.jsonl"), &data, &kb)?;
            writeln!(out, "wrote {} questions to {}", data.len(), out_dir.display())?;
        }
        Command::Oracle {
            kb,
            data,
            max_len,
            limit,
            out: path,
        } => {
            let kb = load_kb(&kb)?;
            let data = load_data(&data, &kb, None)?;
            let exec = &cfg.executor;
            let recs: Vec<OracleRecord> = {
                use rayon::prelude::*;
                data.par_iter()
                    .map(|ex| OracleRecord {
                        question_id: ex.question_id.clone(),
                        programs: bfs_search(&ex.mask_table, &kb, &ex.gold, max_len, limit, exec)
                            .iter()
                            .map(ToString::to_string)
                            .collect(),
                    })
                    .collect()
            };
            let covered = recs.iter().filter(|r| !r.programs.is_empty()).count();
            dataset::write_jsonl(&path, &recs)?;
            writeln!(out, "{covered}/{} questions have a program", recs.len())?;
        }
        Command::Pretrain {
            kb,
            data,
            oracle,
            max_questions,
            seed,
            out: path,
            checkpoint_dir,
        } => {
            with_seed(&mut cfg, seed);
            let kb = load_kb(&kb)?;
            let data = load_data(&data, &kb, oracle.as_deref())?;
            let train = select_split(data, Split::Train);
            let annotated: Vec<Example> = train
                .iter()
                .filter(|e| !e.pseudo_gold.is_empty())
                .take(max_questions)
                .cloned()
                .collect();
            if annotated.is_empty() {
                bail!("no training question has a pseudo-gold program");
            }
            let mut policy = Policy::new(
                cfg.policy.clone(),
                train.iter().flat_map(|e| e.tokens.iter().map(String::as_str)),
            );
            if let Some(d) = &checkpoint_dir {
                std::fs::create_dir_all(d)?;
            }
            let report = pretrain(&mut policy, &annotated, &cfg.train, checkpoint_dir.as_deref())?;
            policy.save(&path)?;
            writeln!(
                out,
                "pretrained on {} questions: loss {:.4} -> {:.4}",
                annotated.len(),
                report.initial_loss,
                report.epoch_losses.last().copied().unwrap_or(report.initial_loss)
            )?;
        }
        Command::TrainRl {
            kb,
            data,
            checkpoint,
            seed,
            pg,
            out: path,
            log,
            checkpoint_dir,
        } => {
            with_seed(&mut cfg, seed);
            cfg.train.use_crb_memory = !pg;
            let kb = load_kb(&kb)?;
            let mut policy = Policy::load(&checkpoint)?;
            let data = load_data(&data, &kb, None)?;
            let (train, held) = dataset::split(&data);
            let env = RlEnv {
                kb: &kb,
                reward: &cfg.reward,
                exec: &cfg.executor,
            };
            let mut memory = MemoryBuffer::new(cfg.train.memory_capacity, cfg.train.seed);
            if let Some(d) = &checkpoint_dir {
                std::fs::create_dir_all(d)?;
            }
            let logs = train_rl(
                &mut policy,
                &train,
                &held,
                &env,
                &cfg.train,
                &mut memory,
                checkpoint_dir.as_deref(),
            )?;
            policy.save(&path)?;
            if let Some(l) = &log {
                write_log_csv(l, &logs)?;
            }
            for l in &logs {
                writeln!(
                    out,
                    "epoch {:>3}  lambda {:.3}  train {:.4}  heldout {:.4}",
                    l.epoch, l.lambda, l.train_reward, l.heldout_reward
                )?;
            }
        }
        Command::Eval {
            kb,
            data,
            checkpoint,
            oracle_mode,
            oracle,
            split,
            out: path,
            predictions,
        } => {
            let kb = load_kb(&kb)?;
            let policy = match (&checkpoint, oracle_mode) {
                (_, true) => None,
                (Some(c), false) => Some(Policy::load(c)?),
                (None, false) => bail!("--checkpoint is required without --oracle-mode"),
            };
            let data = select_split(load_data(&data, &kb, oracle.as_deref())?, split);
            let mode = match &policy {
                Some(p) => EvalMode::Policy {
                    policy: p,
                    beam_width: cfg.train.beam_width(),
                    max_len: cfg.train.max_len(),
                },
                None => EvalMode::Oracle,
            };
            let preds = eval::predict(mode, &data, &kb, &cfg.executor);
            let report = eval::EvalReport::from_scores(preds.iter().map(|p| (p.category, p.score)));
            if let Some(p) = &predictions {
                dataset::write_jsonl(p, &preds)?;
            }
            if let Some(p) = &path {
                std::fs::write(p, serde_json::to_string_pretty(&report)?)?;
            }
            write!(out, "{}", report.table())?;
        }
        Command::Answer {
            kb,
            masks,
            program,
            checkpoint,
            question,
        } => {
            let kb = load_kb(&kb)?;
            let table = mask_spec(&kb, &masks)?.resolve(&kb)?;
            let seq: ActionSequence = match (program, checkpoint, question) {
                (Some(p), _, _) => p.parse()?,
                (None, Some(c), Some(q)) => {
                    let policy = Policy::load(&c)?;
                    let tokens: Vec<String> = q.split_whitespace().map(str::to_owned).collect();
                    let ex = Example {
                        question_id: "cli".into(),
                        tokens,
                        mask_table: table.clone(),
                        gold: crate::Answer::Number(0),
                        category: Default::default(),
                        pseudo_gold: Vec::new(),
                    };
                    let toks = top_beam(&policy, &ex, cfg.train.beam_width(), cfg.train.max_len())
                        .ok_or_else(|| anyhow!("the policy produced no program"))?;
                    crate::dsl::parse_tokens(&toks)
                        .map_err(|e| anyhow!("decoded `{}`: {e}", toks.join(" ")))?
                }
                _ => bail!("give either --program or --checkpoint with --question"),
            };
            writeln!(out, "program: {seq}")?;
            let grounded = table.unmask(&seq)?;
            let (answer, states) = execute_traced(&grounded, &kb, &cfg.executor);
            write_trace(&grounded, &states, &kb, &mut out)?;
            let answer = answer?;
            writeln!(out, "answer: {}", answer.display(&kb))?;
        }
    }
    Ok(())
}
