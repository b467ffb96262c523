//! Named experiment presets: each returns fully resolved configs for one
//! comparison, at either the desk profile (all widths halved, epochs capped
//! at 50, smaller grids) or the full profile.

use serde::{Deserialize, Serialize};

use crate::arch::{AbstractorConfig, EncDecConfig, HeadKind, ModelKind, ModelSpec};
use crate::engine::{tag, Rng};
use crate::nn::{ScoreActivation, SymbolMode};
use crate::tasks::D_OBJECT;

use super::adam::AdamConfig;
use super::curve::{CurveConfig, TransferConfig};
use super::robustness::{NoiseGrid, NoiseKind, RobustnessConfig};
use super::train::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// CI-scale: widths halved, epochs capped at 50, smaller size grids.
    Desk,
    /// Full published hyperparameters.
    Paper,
}

impl Profile {
    pub fn width(self, w: usize) -> usize {
        match self {
            Profile::Desk => (w / 2).max(1),
            Profile::Paper => w,
        }
    }

    pub fn epochs(self, e: usize) -> usize {
        match self {
            Profile::Desk => e.min(50),
            Profile::Paper => e,
        }
    }
}

/// Seed for dataset generation, distinct from the training seed.
pub fn data_seed(seed: u64) -> u64 {
    Rng::stream(seed, &[tag("data")]).next_u64()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedCurve {
    pub name: String,
    pub curve: CurveConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SortingDataCfg {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub seq_len: usize,
}

impl Default for SortingDataCfg {
    fn default() -> Self {
        SortingDataCfg { n_train: 3000, n_val: 500, n_test: 1000, seq_len: 10 }
    }
}

const SORT_SEQ_LEN: usize = 10;

// ── sorting model family ───────────────────────────────────────

fn sort_enc(p: Profile, layers: usize, n_heads: usize, d_p: usize) -> EncDecConfig {
    EncDecConfig {
        layers,
        d_model: p.width(64),
        n_heads,
        d_p: p.width(d_p),
        d_ff: p.width(64),
        pre_norm: false,
    }
}

fn sort_abs(p: Profile, layers: usize, d_r: usize, d_p: usize) -> AbstractorConfig {
    AbstractorConfig {
        layers,
        d_r,
        d_p: p.width(d_p),
        d_s: p.width(64),
        d_ff: p.width(64),
        sigma_rel: ScoreActivation::Softmax,
        symbol_mode: SymbolMode::Learned,
        use_residual: true,
        use_layer_norm: true,
        symmetric: false,
        use_self_attention: true,
        scale_scores: true,
        mask_diagonal: false,
        d_hv: None,
    }
}

fn sort_base(kind: ModelKind) -> ModelSpec {
    ModelSpec {
        kind,
        d_in: D_OBJECT,
        max_input_len: SORT_SEQ_LEN,
        max_target_len: SORT_SEQ_LEN,
        head: HeadKind::Seq2seq { vocab: SORT_SEQ_LEN },
        embed_dim: None,
        encoder: None,
        decoder: None,
        abstractor: None,
        second_abstractor: None,
        abstractor_reads: None,
        mlp_hidden: None,
        corelnet_softmax: None,
    }
}

/// Encoder 2 / relational stack 2 / decoder 2, two heads throughout.
pub fn sorting_arch_b(p: Profile) -> ModelSpec {
    let mut s = sort_base(ModelKind::ArchB);
    s.encoder = Some(sort_enc(p, 2, 2, 64));
    s.decoder = Some(sort_enc(p, 2, 2, 64));
    s.abstractor = Some(sort_abs(p, 2, 2, 64));
    s
}

/// Standard encoder-decoder, depth 4/4 to match arch_b's parameter count.
pub fn sorting_transformer(p: Profile) -> ModelSpec {
    let mut s = sort_base(ModelKind::Transformer);
    s.encoder = Some(sort_enc(p, 4, 2, 64));
    s.decoder = Some(sort_enc(p, 4, 2, 64));
    s
}

/// arch_b with the relational interface swapped for standard
/// cross-attention; parameter shapes identical.
pub fn sorting_ablation(p: Profile) -> ModelSpec {
    let mut s = sorting_arch_b(p);
    s.kind = ModelKind::Ablation;
    s
}

/// Single relational stack on raw objects plus a one-layer decoder.
pub fn sorting_arch_a(p: Profile) -> ModelSpec {
    let mut s = sort_base(ModelKind::ArchA);
    s.decoder = Some(sort_enc(p, 1, 4, 16));
    s.abstractor = Some(sort_abs(p, 1, 4, 16));
    s
}

fn sort_adam() -> AdamConfig {
    AdamConfig::with_lr(1e-3)
}

fn sort_train(p: Profile, model: ModelSpec, seed: u64) -> TrainConfig {
    TrainConfig {
        model,
        adam: sort_adam(),
        batch_size: 512,
        max_epochs: p.epochs(100),
        patience: None,
        seed,
    }
}

// ── experiment presets ─────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig2aPreset {
    pub data: SortingDataCfg,
    pub data_seed: u64,
    pub curves: Vec<NamedCurve>,
}

/// Sorting sample-efficiency comparison: arch_b vs transformer vs ablation
/// over a grid of training-set sizes.
pub fn fig2a(p: Profile, seed: u64) -> Fig2aPreset {
    let (sizes, trials) = match p {
        Profile::Paper => ((1..=30).map(|i| i * 100).collect::<Vec<_>>(), 10),
        Profile::Desk => (vec![100, 300, 1000], 5),
    };
    let curve = |model: ModelSpec| CurveConfig {
        train: sort_train(p, model, seed),
        sizes: sizes.clone(),
        trials,
        metric: "elementwise_acc".into(),
    };
    Fig2aPreset {
        data: SortingDataCfg::default(),
        data_seed: data_seed(seed),
        curves: vec![
            NamedCurve { name: "abstractor".into(), curve: curve(sorting_arch_b(p)) },
            NamedCurve { name: "transformer".into(), curve: curve(sorting_transformer(p)) },
            NamedCurve { name: "ablation".into(), curve: curve(sorting_ablation(p)) },
        ],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTransfer {
    pub name: String,
    pub transfer: TransferConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig2bPreset {
    pub data: SortingDataCfg,
    pub data_seed: u64,
    /// Pre-training sequences drawn from the reshuffled-primary-order task.
    pub pretrain_n: usize,
    pub transfers: Vec<NamedTransfer>,
}

/// Pre-training transfer: arch_a and the transformer are pre-trained on the
/// reshuffled-order task, then fine-tuned on the primary sorting task.
pub fn fig2b(p: Profile, seed: u64) -> Fig2bPreset {
    let (sizes, trials) = match p {
        Profile::Paper => ((1..=30).map(|i| i * 100).collect::<Vec<_>>(), 10),
        Profile::Desk => (vec![100, 250, 500], 5),
    };
    let transfer = |model: ModelSpec| TransferConfig {
        pretrain: sort_train(p, model.clone(), seed),
        curve: CurveConfig {
            train: sort_train(p, model, seed),
            sizes: sizes.clone(),
            trials,
            metric: "elementwise_acc".into(),
        },
    };
    Fig2bPreset {
        data: SortingDataCfg::default(),
        data_seed: data_seed(seed),
        pretrain_n: 3000,
        transfers: vec![
            NamedTransfer { name: "abstractor".into(), transfer: transfer(sorting_arch_a(p)) },
            NamedTransfer {
                name: "transformer".into(),
                transfer: transfer(sorting_transformer(p)),
            },
        ],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderPreset {
    pub n_objects: usize,
    pub d: usize,
    pub split_fracs: (f64, f64, f64),
    pub data_seed: u64,
    pub curves: Vec<NamedCurve>,
}

/// Pairwise-order discrimination: single-layer relational stack with a
/// sigmoid relation activation against both similarity baselines.
pub fn order_relation(p: Profile, seed: u64) -> OrderPreset {
    let d = 8;
    let abstractor = ModelSpec {
        kind: ModelKind::ArchA,
        d_in: d,
        max_input_len: 2,
        max_target_len: 0,
        head: HeadKind::Classifier { classes: 2 },
        embed_dim: None,
        encoder: None,
        decoder: None,
        abstractor: Some(AbstractorConfig {
            layers: 1,
            d_r: 4,
            d_p: p.width(16),
            d_s: p.width(64),
            d_ff: p.width(64),
            sigma_rel: ScoreActivation::Sigmoid,
            symbol_mode: SymbolMode::Learned,
            use_residual: false,
            use_layer_norm: false,
            symmetric: false,
            use_self_attention: false,
            scale_scores: true,
            mask_diagonal: false,
            d_hv: None,
        }),
        second_abstractor: None,
        abstractor_reads: None,
        mlp_hidden: None,
        corelnet_softmax: None,
    };
    let corelnet = |kind: ModelKind| ModelSpec {
        kind,
        d_in: d,
        max_input_len: 2,
        max_target_len: 0,
        head: HeadKind::Classifier { classes: 2 },
        embed_dim: None,
        encoder: None,
        decoder: None,
        abstractor: None,
        second_abstractor: None,
        abstractor_reads: None,
        mlp_hidden: None,
        corelnet_softmax: Some(true),
    };
    let curve = |model: ModelSpec| CurveConfig {
        train: TrainConfig {
            model,
            adam: AdamConfig::with_lr(1e-2),
            batch_size: 64,
            max_epochs: p.epochs(100),
            patience: None,
            seed,
        },
        sizes: vec![512],
        trials: 10,
        metric: "binary_acc".into(),
    };
    OrderPreset {
        n_objects: 32,
        d,
        split_fracs: (0.5, 0.15, 0.35),
        data_seed: data_seed(seed),
        curves: vec![
            NamedCurve { name: "abstractor".into(), curve: curve(abstractor) },
            NamedCurve {
                name: "corelnet_sym".into(),
                curve: curve(corelnet(ModelKind::CorelnetSym)),
            },
            NamedCurve {
                name: "corelnet_asym".into(),
                curve: curve(corelnet(ModelKind::CorelnetAsym)),
            },
        ],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetCurve {
    pub name: String,
    /// True when the arm consumes the 12 pairwise-sameness bits instead of
    /// card embeddings.
    pub symbolic: bool,
    pub curve: CurveConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetPreset {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub data_seed: u64,
    pub curves: Vec<SetCurve>,
}

/// SET-triple classification: symmetric linear-activation relational stack
/// vs similarity baselines (with and without softmax) vs a dense network on
/// oracle relation bits.
pub fn set_classification(p: Profile, seed: u64) -> SetPreset {
    let embed = Some(p.width(64));
    let abstractor = ModelSpec {
        kind: ModelKind::ArchA,
        d_in: crate::tasks::D_CARD,
        max_input_len: 3,
        max_target_len: 0,
        head: HeadKind::Classifier { classes: 2 },
        embed_dim: embed,
        encoder: None,
        decoder: None,
        abstractor: Some(AbstractorConfig {
            layers: 1,
            d_r: 4,
            d_p: p.width(16),
            d_s: p.width(64),
            d_ff: p.width(128),
            sigma_rel: ScoreActivation::Linear,
            symbol_mode: SymbolMode::Learned,
            use_residual: false,
            use_layer_norm: false,
            symmetric: true,
            use_self_attention: false,
            scale_scores: true,
            mask_diagonal: false,
            d_hv: None,
        }),
        second_abstractor: None,
        abstractor_reads: None,
        mlp_hidden: None,
        corelnet_softmax: None,
    };
    let corelnet = |softmax: bool| ModelSpec {
        kind: ModelKind::CorelnetSym,
        d_in: crate::tasks::D_CARD,
        max_input_len: 3,
        max_target_len: 0,
        head: HeadKind::Classifier { classes: 2 },
        embed_dim: embed,
        encoder: None,
        decoder: None,
        abstractor: None,
        second_abstractor: None,
        abstractor_reads: None,
        mlp_hidden: None,
        corelnet_softmax: Some(softmax),
    };
    let mlp = ModelSpec {
        kind: ModelKind::SymbolicMlp,
        d_in: 12,
        max_input_len: 1,
        max_target_len: 0,
        head: HeadKind::Classifier { classes: 2 },
        embed_dim: None,
        encoder: None,
        decoder: None,
        abstractor: None,
        second_abstractor: None,
        abstractor_reads: None,
        mlp_hidden: Some(p.width(32)),
        corelnet_softmax: None,
    };
    let (sizes, trials) = match p {
        Profile::Paper => ((1..=10).map(|i| i * 250).collect::<Vec<_>>(), 10),
        Profile::Desk => (vec![1000, 2500], 5),
    };
    let curve = |model: ModelSpec| CurveConfig {
        train: TrainConfig {
            model,
            adam: AdamConfig::with_lr(1e-3),
            batch_size: 64,
            max_epochs: p.epochs(200),
            patience: None,
            seed,
        },
        sizes: sizes.clone(),
        trials,
        metric: "binary_acc".into(),
    };
    SetPreset {
        n_train: 2500,
        n_val: 500,
        n_test: 1000,
        data_seed: data_seed(seed),
        curves: vec![
            SetCurve { name: "abstractor".into(), symbolic: false, curve: curve(abstractor) },
            SetCurve {
                name: "corelnet_softmax".into(),
                symbolic: false,
                curve: curve(corelnet(true)),
            },
            SetCurve {
                name: "corelnet_linear".into(),
                symbolic: false,
                curve: curve(corelnet(false)),
            },
            SetCurve { name: "symbolic_mlp".into(), symbolic: true, curve: curve(mlp) },
        ],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedRobustness {
    pub name: String,
    pub config: RobustnessConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessPreset {
    pub data: SortingDataCfg,
    pub data_seed: u64,
    pub sweeps: Vec<NamedRobustness>,
}

/// Corruption robustness on sorting: arch_b and the transformer, trained on
/// the full clean training pool, evaluated on both corruption kinds.
pub fn robustness(p: Profile, seed: u64) -> RobustnessPreset {
    let grids = vec![
        NoiseGrid { kind: NoiseKind::Additive, sigmas: vec![0.0, 0.1, 0.25, 0.5, 1.0] },
        NoiseGrid { kind: NoiseKind::Linear, sigmas: vec![0.1, 0.2, 0.289, 0.4, 0.6] },
    ];
    let config = |model: ModelSpec| RobustnessConfig {
        train: sort_train(p, model, seed),
        grids: grids.clone(),
        trials: 5,
    };
    RobustnessPreset {
        data: SortingDataCfg::default(),
        data_seed: data_seed(seed),
        sweeps: vec![
            NamedRobustness { name: "abstractor".into(), config: config(sorting_arch_b(p)) },
            NamedRobustness {
                name: "transformer".into(),
                config: config(sorting_transformer(p)),
            },
        ],
    }
}

/// Optimizer settings shipped for the out-of-scope math benchmark lane;
/// unused by any preset above.
pub fn math_adam() -> AdamConfig {
    AdamConfig { lr: 6e-4, beta1: 0.9, beta2: 0.995, eps: 1e-9 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::assemble;

    #[test]
    fn every_preset_spec_validates() {
        for p in [Profile::Desk, Profile::Paper] {
            for nc in fig2a(p, 1).curves {
                nc.curve.train.model.validate().unwrap();
            }
            for nt in fig2b(p, 1).transfers {
                nt.transfer.pretrain.model.validate().unwrap();
                nt.transfer.curve.train.model.validate().unwrap();
            }
            for nc in order_relation(p, 1).curves {
                nc.curve.train.model.validate().unwrap();
            }
            for sc in set_classification(p, 1).curves {
                sc.curve.train.model.validate().unwrap();
            }
            for nr in robustness(p, 1).sweeps {
                nr.config.train.model.validate().unwrap();
            }
        }
    }

    #[test]
    fn full_profile_parameter_counts_sit_in_published_bands() {
        let b = assemble::<f32>(&sorting_arch_b(Profile::Paper), 1).unwrap();
        let t = assemble::<f32>(&sorting_transformer(Profile::Paper), 1).unwrap();
        let nb = b.store.total_params() as f64;
        let nt = t.store.total_params() as f64;
        assert!((nb - 386_954.0).abs() <= 0.05 * 386_954.0, "arch_b {nb}");
        assert!((nt - 469_898.0).abs() <= 0.05 * 469_898.0, "transformer {nt}");
    }

    #[test]
    fn ablation_matches_arch_b_parameter_count_exactly() {
        let b = assemble::<f32>(&sorting_arch_b(Profile::Paper), 1).unwrap();
        let a = assemble::<f32>(&sorting_ablation(Profile::Paper), 1).unwrap();
        assert_eq!(b.store.total_params(), a.store.total_params());
    }

    #[test]
    fn desk_profile_halves_widths_and_caps_epochs() {
        let desk = fig2a(Profile::Desk, 1);
        let paper = fig2a(Profile::Paper, 1);
        let dm = |p: &Fig2aPreset| {
            p.curves[0].curve.train.model.encoder.as_ref().unwrap().d_model
        };
        assert_eq!(dm(&desk) * 2, dm(&paper));
        assert_eq!(desk.curves[0].curve.train.max_epochs, 50);
        assert_eq!(paper.curves[0].curve.train.max_epochs, 100);
        let set_desk = set_classification(Profile::Desk, 1);
        assert_eq!(set_desk.curves[0].curve.train.max_epochs, 50);
        let set_paper = set_classification(Profile::Paper, 1);
        assert_eq!(set_paper.curves[0].curve.train.max_epochs, 200);
    }

    #[test]
    fn fig2a_full_grid_has_thirty_sizes_and_three_models() {
        let p = fig2a(Profile::Paper, 3);
        assert_eq!(p.curves.len(), 3);
        for nc in &p.curves {
            assert_eq!(nc.curve.sizes.len(), 30);
            assert_eq!(nc.curve.sizes[0], 100);
            assert_eq!(*nc.curve.sizes.last().unwrap(), 3000);
            assert_eq!(nc.curve.trials, 10);
            assert_eq!(nc.curve.train.batch_size, 512);
        }
    }

    #[test]
    fn order_preset_pins_published_settings() {
        let p = order_relation(Profile::Paper, 5);
        assert_eq!(p.n_objects, 32);
        assert_eq!(p.curves.len(), 3);
        let a = p.curves[0].curve.train.model.abstractor.as_ref().unwrap();
        assert_eq!(a.sigma_rel, ScoreActivation::Sigmoid);
        assert_eq!((a.d_r, a.d_p, a.d_s, a.d_ff), (4, 16, 64, 64));
        assert!(!a.use_residual && !a.use_layer_norm && !a.symmetric);
        assert_eq!(p.curves[0].curve.train.adam.lr, 1e-2);
        assert_eq!(p.curves[0].curve.sizes, vec![512]);
        assert_eq!(p.curves[0].curve.trials, 10);
    }

    #[test]
    fn set_preset_pins_published_settings() {
        let p = set_classification(Profile::Paper, 5);
        let a = p.curves[0].curve.train.model.abstractor.as_ref().unwrap();
        assert_eq!(a.sigma_rel, ScoreActivation::Linear);
        assert!(a.symmetric);
        assert_eq!((a.d_r, a.d_p, a.d_s, a.d_ff), (4, 16, 64, 128));
        assert_eq!(p.curves[0].curve.train.model.embed_dim, Some(64));
        assert_eq!(p.curves[1].curve.train.model.corelnet_softmax, Some(true));
        assert_eq!(p.curves[2].curve.train.model.corelnet_softmax, Some(false));
        assert!(p.curves[3].symbolic);
        assert_eq!(p.n_train, 2500);
    }

    #[test]
    fn robustness_preset_pins_both_grids() {
        let p = robustness(Profile::Desk, 5);
        assert_eq!(p.data.n_train, 3000);
        for nr in &p.sweeps {
            assert_eq!(nr.config.grids.len(), 2);
            assert_eq!(nr.config.grids[0].sigmas, vec![0.0, 0.1, 0.25, 0.5, 1.0]);
            assert_eq!(nr.config.grids[1].sigmas, vec![0.1, 0.2, 0.289, 0.4, 0.6]);
            assert_eq!(nr.config.trials, 5);
        }
    }

    #[test]
    fn math_lane_optimizer_settings() {
        let a = math_adam();
        assert_eq!((a.lr, a.beta2, a.eps), (6e-4, 0.995, 1e-9));
    }

    #[test]
    fn presets_serialize_to_toml_and_back() {
        let p = fig2a(Profile::Desk, 9);
        let text = toml::to_string(&p.curves[0].curve).unwrap();
        let back: CurveConfig = toml::from_str(&text).unwrap();
        assert_eq!(p.curves[0].curve, back);
    }
}
