//! The velocity network.
//!
//! Per object, latent tokens are embedded and processed by a stack of
//! attention blocks with weights shared across all objects in the group.
//! Single-stream blocks attend over one object's latents concatenated with
//! its own condition tokens; coupled fusion blocks attend over the
//! concatenation of every object's latents (and only the latents), which is
//! the channel through which jointly reconstructed objects exchange
//! information. The `Replace` variant turns every second single-stream slot
//! into a coupled block; `Insert` appends a coupled block after each
//! single-stream block.
//!
//! Conditions are point sets: a per-point feature MLP, a mean-pooled summary
//! token, and a bank of learned queries that cross-attend to the point
//! features. The encoding is invariant to input point order.
//!
//! Time conditioning is a sinusoidal embedding passed through a small MLP;
//! each block derives scale/shift/gate modulation from it. The output head
//! starts at exactly zero, so an untrained model predicts zero velocity.

use crate::autodiff::{Graph, Mat, Var};
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::rng;
use rand::Rng;

/// Where coupled fusion blocks sit relative to single-stream blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Replace,
    Insert,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Replace => "replace",
            Variant::Insert => "insert",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "replace" => Ok(Variant::Replace),
            "insert" => Ok(Variant::Insert),
            _ => Err(Error::Config(format!("unknown variant `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    Single,
    Coupled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub depth_single: usize,
    pub variant: Variant,
    pub width: usize,
    pub heads: usize,
    pub token_count: usize,
    pub token_width: usize,
    /// Learned condition queries; one mean-pooled token is appended, so the
    /// condition sequence length is `cond_queries + 1`.
    pub cond_queries: usize,
    pub max_k: usize,
    pub time_embed_dim: usize,
    pub ffn_mult: usize,
    /// Observations larger than this are thinned (order-independently)
    /// before encoding.
    pub max_cond_points: usize,
    /// Diagnostic switch: treat every coupled block as the identity.
    pub ablate_coupling: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            depth_single: 6,
            variant: Variant::Replace,
            width: 128,
            heads: 4,
            token_count: 64,
            token_width: 6,
            cond_queries: 16,
            max_k: 9,
            time_embed_dim: 64,
            ffn_mult: 2,
            max_cond_points: 384,
            ablate_coupling: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.width % self.heads != 0 {
            return Err(Error::Config(format!(
                "width {} not divisible by heads {}",
                self.width, self.heads
            )));
        }
        if self.depth_single == 0 {
            return Err(Error::Config("depth_single must be at least 1".into()));
        }
        if self.time_embed_dim < 4 || self.time_embed_dim % 2 != 0 {
            return Err(Error::Config(
                "time_embed_dim must be an even number of at least 4".into(),
            ));
        }
        if self.token_count == 0
            || self.token_width == 0
            || self.cond_queries == 0
            || self.max_k == 0
            || self.ffn_mult == 0
            || self.max_cond_points == 0
        {
            return Err(Error::Config("zero-sized model dimension".into()));
        }
        Ok(())
    }

    /// Sequence of blocks implied by the variant.
    pub fn block_kinds(&self) -> Vec<BlockKind> {
        let mut kinds = Vec::new();
        for i in 0..self.depth_single {
            match self.variant {
                Variant::Replace => {
                    if i % 2 == 1 {
                        kinds.push(BlockKind::Coupled);
                    } else {
                        kinds.push(BlockKind::Single);
                    }
                }
                Variant::Insert => {
                    kinds.push(BlockKind::Single);
                    kinds.push(BlockKind::Coupled);
                }
            }
        }
        kinds
    }

    fn pf_hidden(&self) -> usize {
        (self.width / 2).max(4)
    }

    pub fn to_kv(&self) -> Vec<(String, String)> {
        vec![
            ("depth_single".into(), self.depth_single.to_string()),
            ("variant".into(), self.variant.name().into()),
            ("width".into(), self.width.to_string()),
            ("heads".into(), self.heads.to_string()),
            ("token_count".into(), self.token_count.to_string()),
            ("token_width".into(), self.token_width.to_string()),
            ("cond_queries".into(), self.cond_queries.to_string()),
            ("max_k".into(), self.max_k.to_string()),
            ("time_embed_dim".into(), self.time_embed_dim.to_string()),
            ("ffn_mult".into(), self.ffn_mult.to_string()),
            ("max_cond_points".into(), self.max_cond_points.to_string()),
            (
                "ablate_coupling".into(),
                self.ablate_coupling.to_string(),
            ),
        ]
    }

    pub fn from_kv(kv: &[(String, String)]) -> Result<Self> {
        let get = |key: &str| -> Result<&str> {
            kv.iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| Error::Config(format!("missing model config key `{key}`")))
        };
        let parse = |key: &str| -> Result<usize> {
            get(key)?
                .parse()
                .map_err(|_| Error::Config(format!("bad value for `{key}`")))
        };
        let cfg = ModelConfig {
            depth_single: parse("depth_single")?,
            variant: Variant::from_name(get("variant")?)?,
            width: parse("width")?,
            heads: parse("heads")?,
            token_count: parse("token_count")?,
            token_width: parse("token_width")?,
            cond_queries: parse("cond_queries")?,
            max_k: parse("max_k")?,
            time_embed_dim: parse("time_embed_dim")?,
            ffn_mult: parse("ffn_mult")?,
            max_cond_points: parse("max_cond_points")?,
            ablate_coupling: get("ablate_coupling")? == "true",
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Encoded condition tokens for one object: `(cond_queries + 1) × width`,
/// or a marker for "no condition" in oracle tests.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionTokens {
    pub tokens: Mat,
}

impl ConditionTokens {
    pub fn empty() -> Self {
        ConditionTokens {
            tokens: Mat::zeros(0, 0),
        }
    }
}

/// Named parameter tensors in schema order.
#[derive(Debug, Clone)]
pub struct Parameters {
    pub tensors: Vec<Mat>,
    pub names: Vec<String>,
}

impl Parameters {
    pub fn total_len(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors
            .iter()
            .flat_map(|t| t.data.iter().copied())
            .collect()
    }

    pub fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.total_len() {
            return Err(Error::Dimension(format!(
                "parameter blob has {} values, model needs {}",
                flat.len(),
                self.total_len()
            )));
        }
        let mut at = 0;
        for t in &mut self.tensors {
            t.data.copy_from_slice(&flat[at..at + t.data.len()]);
            at += t.data.len();
        }
        Ok(())
    }
}

enum InitRule {
    Xavier,
    Small,
    Zero,
}

fn schema(cfg: &ModelConfig) -> Vec<(String, usize, usize, InitRule)> {
    use InitRule::*;
    let w = cfg.width;
    let h = cfg.pf_hidden();
    let f = cfg.ffn_mult * w;
    let mut s: Vec<(String, usize, usize, InitRule)> = vec![
        ("embed_w".into(), cfg.token_width, w, Xavier),
        ("embed_b".into(), 1, w, Zero),
        ("pf_w1".into(), 6, h, Xavier),
        ("pf_b1".into(), 1, h, Zero),
        ("pf_w2".into(), h, w, Xavier),
        ("pf_b2".into(), 1, w, Zero),
        ("null_pool".into(), 1, w, Small),
        ("queries".into(), cfg.cond_queries, w, Small),
        ("cq_w".into(), w, w, Xavier),
        ("cq_b".into(), 1, w, Zero),
        ("ck_w".into(), w, w, Xavier),
        ("ck_b".into(), 1, w, Zero),
        ("cv_w".into(), w, w, Xavier),
        ("cv_b".into(), 1, w, Zero),
        ("co_w".into(), w, w, Xavier),
        ("co_b".into(), 1, w, Zero),
        ("t_w1".into(), cfg.time_embed_dim, w, Xavier),
        ("t_b1".into(), 1, w, Zero),
        ("t_w2".into(), w, w, Xavier),
        ("t_b2".into(), 1, w, Zero),
    ];
    for (b, _) in cfg.block_kinds().iter().enumerate() {
        for proj in ["wq", "wk", "wv", "wo"] {
            s.push((format!("b{b}_{proj}"), w, w, Xavier));
            s.push((format!("b{b}_{proj}_b"), 1, w, Zero));
        }
        s.push((format!("b{b}_f1"), w, f, Xavier));
        s.push((format!("b{b}_f1_b"), 1, f, Zero));
        s.push((format!("b{b}_f2"), f, w, Xavier));
        s.push((format!("b{b}_f2_b"), 1, w, Zero));
        s.push((format!("b{b}_mod_w"), w, 6 * w, Zero));
        s.push((format!("b{b}_mod_b"), 1, 6 * w, Zero));
    }
    s.push(("final_mod_w".into(), w, 2 * w, Zero));
    s.push(("final_mod_b".into(), 1, 2 * w, Zero));
    s.push(("head_w".into(), w, cfg.token_width, Zero));
    s.push(("head_b".into(), 1, cfg.token_width, Zero));
    s
}

/// Closed-form parameter count for a config.
pub fn param_count(cfg: &ModelConfig) -> usize {
    let w = cfg.width;
    let h = cfg.pf_hidden();
    let f = cfg.ffn_mult * w;
    let blocks = cfg.block_kinds().len();
    let embed = cfg.token_width * w + w;
    let pf = 6 * h + h + h * w + w;
    let null_and_queries = w + cfg.cond_queries * w;
    let cross = 4 * (w * w + w);
    let time = cfg.time_embed_dim * w + w + w * w + w;
    let per_block = 4 * (w * w + w) + (w * f + f + f * w + w) + (w * 6 * w + 6 * w);
    let finish = w * 2 * w + 2 * w;
    let head = w * cfg.token_width + cfg.token_width;
    embed + pf + null_and_queries + cross + time + blocks * per_block + finish + head
}

/// Initialize parameters. Weight matrices use Xavier-uniform, biases and all
/// modulation projections start at zero (blocks begin as the identity), the
/// query bank starts small, and the output head starts at exactly zero.
pub fn init_params(cfg: &ModelConfig, seed: u64) -> Result<Parameters> {
    cfg.validate()?;
    let mut r = rng::rng(rng::subseed(seed, 0x1417));
    let mut tensors = Vec::new();
    let mut names = Vec::new();
    for (name, rows, cols, rule) in schema(cfg) {
        let data: Vec<f64> = match rule {
            InitRule::Xavier => {
                let a = (6.0 / (rows + cols) as f64).sqrt();
                (0..rows * cols).map(|_| r.random_range(-a..=a)).collect()
            }
            InitRule::Small => (0..rows * cols)
                .map(|_| r.random_range(-0.02..=0.02))
                .collect(),
            InitRule::Zero => vec![0.0; rows * cols],
        };
        tensors.push(Mat::from_vec(rows, cols, data));
        names.push(name);
    }
    Ok(Parameters { tensors, names })
}

/// Sinusoidal embedding of the noise level.
fn time_embedding(t: f64, dim: usize) -> Mat {
    let half = dim / 2;
    let mut data = vec![0.0; dim];
    for i in 0..half {
        let freq = 1000.0f64.powf(i as f64 / (half - 1) as f64);
        data[i] = (t * freq).sin();
        data[half + i] = (t * freq).cos();
    }
    Mat::from_vec(1, dim, data)
}

/// Centroid of observation points; zero for an empty observation.
pub fn obs_centroid(points: &[Vec3]) -> Vec3 {
    if points.is_empty() {
        return [0.0; 3];
    }
    let mut c = [0.0; 3];
    for p in points {
        c = crate::geom::add(c, *p);
    }
    crate::geom::scale(c, 1.0 / points.len() as f64)
}

/// Centered xyz+normal rows for the condition encoder, thinned to at most
/// `max_points`. Thinning sorts rows lexicographically first, so the result
/// does not depend on input point order.
pub fn condition_input(
    points: &[Vec3],
    normals: &[Vec3],
    max_points: usize,
) -> (Vec<[f64; 6]>, Vec3) {
    let centroid = obs_centroid(points);
    let mut rows: Vec<[f64; 6]> = points
        .iter()
        .zip(normals)
        .map(|(p, n)| {
            let q = crate::geom::sub(*p, centroid);
            [q[0], q[1], q[2], n[0], n[1], n[2]]
        })
        .collect();
    if rows.len() > max_points {
        rows.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let stride = rows.len() as f64 / max_points as f64;
        rows = (0..max_points)
            .map(|i| rows[(i as f64 * stride) as usize])
            .collect();
    }
    (rows, centroid)
}

/// The joint reconstruction model: config plus parameters.
#[derive(Debug, Clone)]
pub struct Jrm {
    pub config: ModelConfig,
    pub params: Parameters,
}

struct Builder<'a> {
    g: Graph,
    vars: Vec<Var>,
    names: &'a [String],
    cfg: &'a ModelConfig,
}

impl<'a> Builder<'a> {
    fn new(jrm: &'a Jrm) -> Self {
        let mut g = Graph::new();
        let vars = jrm
            .params
            .tensors
            .iter()
            .enumerate()
            .map(|(slot, t)| g.param(t.clone(), slot))
            .collect();
        Builder {
            g,
            vars,
            names: &jrm.params.names,
            cfg: &jrm.config,
        }
    }

    fn p(&self, name: &str) -> Var {
        let idx = self
            .names
            .iter()
            .position(|n| n == name)
            .unwrap_or_else(|| panic!("unknown parameter `{name}`"));
        self.vars[idx]
    }

    fn multi_head_attention(
        &mut self,
        q_in: Var,
        kv_in: Var,
        wq: Var,
        bq: Var,
        wk: Var,
        bk: Var,
        wv: Var,
        bv: Var,
        wo: Var,
        bo: Var,
    ) -> Var {
        let g = &mut self.g;
        let q = g.linear(q_in, wq, bq);
        let k = g.linear(kv_in, wk, bk);
        let v = g.linear(kv_in, wv, bv);
        let dh = self.cfg.width / self.cfg.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut heads = Vec::with_capacity(self.cfg.heads);
        for h in 0..self.cfg.heads {
            let qh = g.slice_cols(q, h * dh, dh);
            let kh = g.slice_cols(k, h * dh, dh);
            let vh = g.slice_cols(v, h * dh, dh);
            let s = g.matmul_nt(qh, kh);
            let s = g.scale(s, scale);
            let p = g.softmax_rows(s);
            heads.push(g.matmul(p, vh));
        }
        let o = g.concat_cols(&heads);
        g.linear(o, wo, bo)
    }

    /// Encode one observation's centered point rows into condition tokens.
    fn encode_condition(&mut self, rows: &[[f64; 6]]) -> Var {
        let queries = self.p("queries");
        let pooled_and_q = if rows.is_empty() {
            let null = self.p("null_pool");
            (null, queries)
        } else {
            let data: Vec<f64> = rows.iter().flatten().copied().collect();
            let pts = self.g.constant(Mat::from_vec(rows.len(), 6, data));
            let (w1, b1) = (self.p("pf_w1"), self.p("pf_b1"));
            let (w2, b2) = (self.p("pf_w2"), self.p("pf_b2"));
            let hidden = self.g.linear(pts, w1, b1);
            let hidden = self.g.silu(hidden);
            let feats = self.g.linear(hidden, w2, b2);
            let pooled = self.g.mean_rows(feats);
            let attn = self.multi_head_attention(
                queries,
                feats,
                self.p("cq_w"),
                self.p("cq_b"),
                self.p("ck_w"),
                self.p("ck_b"),
                self.p("cv_w"),
                self.p("cv_b"),
                self.p("co_w"),
                self.p("co_b"),
            );
            let q = self.g.add(queries, attn);
            (pooled, q)
        };
        let (pooled, q) = pooled_and_q;
        self.g.concat_rows(&[q, pooled])
    }

    /// Time-conditioning vector (1 × width).
    fn time_vector(&mut self, t: f64) -> Var {
        let emb = self
            .g
            .constant(time_embedding(t, self.cfg.time_embed_dim));
        let h = self.g.linear(emb, self.p("t_w1"), self.p("t_b1"));
        let h = self.g.silu(h);
        self.g.linear(h, self.p("t_w2"), self.p("t_b2"))
    }

    /// Scale/shift/gate rows for block `b` from the time vector.
    fn modulation(&mut self, block: usize, t_vec: Var) -> [Var; 6] {
        let w = self.cfg.width;
        let mod_w = self.p(&format!("b{block}_mod_w"));
        let mod_b = self.p(&format!("b{block}_mod_b"));
        let m = self.g.linear(t_vec, mod_w, mod_b);
        std::array::from_fn(|i| self.g.slice_cols(m, i * w, w))
    }

    /// Pre-norm attention + feed-forward body shared by both block kinds.
    fn block_body(&mut self, block: usize, x: Var, t_vec: Var) -> Var {
        let [s1, t1, g1, s2, t2, g2] = self.modulation(block, t_vec);
        let h = self.g.layer_norm_rows(x);
        let h = self.g.row_affine(h, s1, t1);
        let attn = self.multi_head_attention(
            h,
            h,
            self.p(&format!("b{block}_wq")),
            self.p(&format!("b{block}_wq_b")),
            self.p(&format!("b{block}_wk")),
            self.p(&format!("b{block}_wk_b")),
            self.p(&format!("b{block}_wv")),
            self.p(&format!("b{block}_wv_b")),
            self.p(&format!("b{block}_wo")),
            self.p(&format!("b{block}_wo_b")),
        );
        let x = self.g.add_gated(x, attn, g1);
        let h2 = self.g.layer_norm_rows(x);
        let h2 = self.g.row_affine(h2, s2, t2);
        let f = self.g.linear(
            h2,
            self.p(&format!("b{block}_f1")),
            self.p(&format!("b{block}_f1_b")),
        );
        let f = self.g.silu(f);
        let f = self.g.linear(
            f,
            self.p(&format!("b{block}_f2")),
            self.p(&format!("b{block}_f2_b")),
        );
        self.g.add_gated(x, f, g2)
    }

    /// Forward all objects through the block stack; returns per-object
    /// velocity prediction nodes.
    fn forward(&mut self, z_inputs: &[Mat], t: f64, conds: &[Var]) -> Vec<Var> {
        let n = self.cfg.token_count;
        let k = z_inputs.len();
        let t_vec = self.time_vector(t);
        let (embed_w, embed_b) = (self.p("embed_w"), self.p("embed_b"));
        let mut latents: Vec<Var> = z_inputs
            .iter()
            .map(|z| {
                let zc = self.g.constant(z.clone());
                self.g.linear(zc, embed_w, embed_b)
            })
            .collect();
        for (b, kind) in self.cfg.block_kinds().iter().enumerate() {
            match kind {
                BlockKind::Single => {
                    for i in 0..k {
                        let x = self.g.concat_rows(&[latents[i], conds[i]]);
                        let out = self.block_body(b, x, t_vec);
                        latents[i] = self.g.slice_rows(out, 0, n);
                    }
                }
                BlockKind::Coupled => {
                    if self.cfg.ablate_coupling {
                        continue;
                    }
                    let x = self.g.concat_rows(&latents);
                    let out = self.block_body(b, x, t_vec);
                    for i in 0..k {
                        latents[i] = self.g.slice_rows(out, i * n, n);
                    }
                }
            }
        }
        let final_mod_w = self.p("final_mod_w");
        let final_mod_b = self.p("final_mod_b");
        let m = self.g.linear(t_vec, final_mod_w, final_mod_b);
        let fs = self.g.slice_cols(m, 0, self.cfg.width);
        let ft = self.g.slice_cols(m, self.cfg.width, self.cfg.width);
        let (head_w, head_b) = (self.p("head_w"), self.p("head_b"));
        latents
            .iter()
            .map(|z| {
                let h = self.g.layer_norm_rows(*z);
                let h = self.g.row_affine(h, fs, ft);
                self.g.linear(h, head_w, head_b)
            })
            .collect()
    }
}

impl Jrm {
    pub fn init(config: ModelConfig, seed: u64) -> Result<Jrm> {
        let params = init_params(&config, seed)?;
        Ok(Jrm { config, params })
    }

    fn check_group(&self, k: usize) -> Result<()> {
        if k == 0 {
            return Err(Error::Input("empty object group".into()));
        }
        if k > self.config.max_k {
            return Err(Error::Capacity {
                got: k,
                max: self.config.max_k,
            });
        }
        Ok(())
    }

    fn check_tokens(&self, z: &Mat) -> Result<()> {
        if z.rows != self.config.token_count || z.cols != self.config.token_width {
            return Err(Error::Dimension(format!(
                "latent tokens {}×{} do not match config {}×{}",
                z.rows, z.cols, self.config.token_count, self.config.token_width
            )));
        }
        Ok(())
    }

    /// Encode an observation (centered rows) into condition tokens.
    pub fn encode_condition(&self, rows: &[[f64; 6]]) -> ConditionTokens {
        let mut b = Builder::new(self);
        let node = b.encode_condition(rows);
        ConditionTokens {
            tokens: b.g.val(node).clone(),
        }
    }

    /// Prepare an observation for conditioning: center it, thin it, and
    /// return the rows together with the centroid that was removed.
    pub fn prepare_condition(&self, points: &[Vec3], normals: &[Vec3]) -> (Vec<[f64; 6]>, Vec3) {
        condition_input(points, normals, self.config.max_cond_points)
    }

    /// Velocity predictions from pre-encoded condition tokens.
    pub fn velocities_from_tokens(
        &self,
        z: &[Mat],
        t: f64,
        conds: &[ConditionTokens],
    ) -> Result<Vec<Mat>> {
        self.check_group(z.len())?;
        if z.len() != conds.len() {
            return Err(Error::Dimension(format!(
                "{} latents vs {} conditions",
                z.len(),
                conds.len()
            )));
        }
        for zk in z {
            self.check_tokens(zk)?;
        }
        let mut b = Builder::new(self);
        let cond_vars: Vec<Var> = conds
            .iter()
            .map(|c| b.g.constant(c.tokens.clone()))
            .collect();
        let outs = b.forward(z, t, &cond_vars);
        let vals: Vec<Mat> = outs.iter().map(|v| b.g.val(*v).clone()).collect();
        for v in &vals {
            if !v.is_finite() {
                return Err(Error::NonFinite("velocity prediction".into()));
            }
        }
        Ok(vals)
    }

    /// Training objective: encode conditions in-graph, forward, and return
    /// the joint loss (per-object token MSE summed over objects) with
    /// gradients for every parameter tensor.
    pub fn loss_and_grads(
        &self,
        zt: &[Mat],
        t: f64,
        inputs: &[Vec<[f64; 6]>],
        targets: &[Mat],
    ) -> Result<(f64, Vec<Option<Mat>>)> {
        self.check_group(zt.len())?;
        if zt.len() != inputs.len() || zt.len() != targets.len() {
            return Err(Error::Dimension(
                "latents, inputs and targets must have equal length".into(),
            ));
        }
        for zk in zt.iter().chain(targets.iter()) {
            self.check_tokens(zk)?;
        }
        let mut b = Builder::new(self);
        let cond_vars: Vec<Var> = inputs.iter().map(|rows| b.encode_condition(rows)).collect();
        let outs = b.forward(zt, t, &cond_vars);
        let losses: Vec<Var> = outs
            .iter()
            .zip(targets)
            .map(|(v, tgt)| {
                let tv = b.g.constant(tgt.clone());
                b.g.mean_sq_diff(*v, tv)
            })
            .collect();
        let loss = b.g.sum_scalars(&losses);
        let value = b.g.scalar(loss);
        let grads = b.g.backward(loss, self.params.tensors.len());
        Ok((value, grads))
    }

    /// Run a single coupled block in isolation (diagnostics and tests).
    pub fn coupled_block_values(&self, block: usize, z_latents: &[Mat], t: f64) -> Vec<Mat> {
        assert_eq!(
            self.config.block_kinds()[block],
            BlockKind::Coupled,
            "block {block} is not coupled"
        );
        let n = z_latents[0].rows;
        let mut b = Builder::new(self);
        let t_vec = b.time_vector(t);
        let inputs: Vec<Var> = z_latents.iter().map(|z| b.g.constant(z.clone())).collect();
        let x = b.g.concat_rows(&inputs);
        let out = b.block_body(block, x, t_vec);
        (0..z_latents.len())
            .map(|i| {
                let s = b.g.slice_rows(out, i * n, n);
                b.g.val(s).clone()
            })
            .collect()
    }

    /// The same block body applied to one object without any concatenation,
    /// for comparing against the K=1 coupled path.
    pub fn plain_block_values(&self, block: usize, z_latent: &Mat, t: f64) -> Mat {
        let mut b = Builder::new(self);
        let t_vec = b.time_vector(t);
        let x = b.g.constant(z_latent.clone());
        let out = b.block_body(block, x, t_vec);
        b.g.val(out).clone()
    }
}

impl crate::flow::VelocityField for Jrm {
    fn max_k(&self) -> usize {
        self.config.max_k
    }

    fn velocities(
        &self,
        z: &[crate::flow::LatentTokens],
        t: f64,
        conds: &[ConditionTokens],
    ) -> Result<Vec<crate::flow::LatentTokens>> {
        let mats: Vec<Mat> = z.iter().map(|zt| zt.tokens.clone()).collect();
        let outs = self.velocities_from_tokens(&mats, t, conds)?;
        Ok(outs.into_iter().map(crate::flow::LatentTokens::new).collect())
    }
}
