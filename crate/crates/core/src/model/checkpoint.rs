//! Checkpoint container: a UTF-8 header (magic line, `meta key value` lines,
//! `tensor name d0xd1` lines, `end`) followed by every tensor's values as
//! little-endian f32 in header order. Reloading is bit-exact for f32 models.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{DecompositionKind, ModelConfig, ModelParams};
use crate::scalar::Scalar;

const MAGIC: &str = "RATESV-CHECKPOINT 1";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CheckpointMeta {
    pub seed: u64,
    /// Global training step the parameters correspond to.
    pub step: u64,
    pub extra: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams<f32>,
    pub meta: CheckpointMeta,
}

fn kind_str(k: DecompositionKind) -> &'static str {
    match k {
        DecompositionKind::Attention => "attention",
        DecompositionKind::Parallel => "parallel",
        DecompositionKind::Identity => "identity",
    }
}

fn join(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

pub fn save_checkpoint<T: Scalar>(
    path: impl AsRef<Path>,
    params: &ModelParams<T>,
    meta: &CheckpointMeta,
) -> Result<()> {
    let path = path.as_ref();
    let c = &params.config;
    let mut head = String::new();
    head.push_str(MAGIC);
    head.push('\n');
    let mut kv = vec![
        ("feat_dim".to_string(), c.feat_dim.to_string()),
        ("channels".into(), c.channels.to_string()),
        ("kernels".into(), join(&c.kernels)),
        ("dilations".into(), join(&c.dilations)),
        ("embed_dim".into(), c.embed_dim.to_string()),
        ("bottleneck_ratio".into(), c.bottleneck_ratio.to_string()),
        ("cos_dim".into(), c.cos_dim.to_string()),
        ("decomposition".into(), kind_str(c.decomposition).to_string()),
        ("pool_var_floor".into(), c.pool_var_floor.to_string()),
        ("num_speakers".into(), params.num_speakers.to_string()),
        ("seed".into(), meta.seed.to_string()),
        ("step".into(), meta.step.to_string()),
    ];
    for (k, v) in &meta.extra {
        if k.contains(char::is_whitespace) || v.contains('\n') {
            return Err(Error::Argument(format!("metadata entry `{k}` is not single-line")));
        }
        kv.push((format!("x.{k}"), v.clone()));
    }
    for (k, v) in kv {
        head.push_str(&format!("meta {k} {v}\n"));
    }
    let tensors = params.tensors();
    for t in &tensors {
        head.push_str(&format!("tensor {} {}\n", t.name, join(&t.shape).replace(',', "x")));
    }
    head.push_str("end\n");

    let mut out =
        std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    out.write_all(head.as_bytes()).map_err(|e| Error::io(path, e))?;
    for t in &tensors {
        let mut buf = Vec::with_capacity(4 * t.data.len());
        for v in t.data {
            buf.extend_from_slice(&v.as_f32().to_le_bytes());
        }
        out.write_all(&buf).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |why: String| Error::format(path, why);

    let mut pos = 0usize;
    let mut next_line = || -> Result<String> {
        let rest = &bytes[pos..];
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| bad("truncated header".into()))?;
        let line = std::str::from_utf8(&rest[..nl])
            .map_err(|_| bad("header is not UTF-8".into()))?
            .to_string();
        pos += nl + 1;
        Ok(line)
    };

    if next_line()? != MAGIC {
        return Err(bad("not a checkpoint file".into()));
    }
    let mut meta_kv = BTreeMap::new();
    let mut listed = Vec::new();
    loop {
        let line = next_line()?;
        if line == "end" {
            break;
        }
        let mut parts = line.splitn(3, ' ');
        match (parts.next(), parts.next(), parts.next()) {
            (Some("meta"), Some(k), Some(v)) => {
                meta_kv.insert(k.to_string(), v.to_string());
            }
            (Some("tensor"), Some(name), Some(shape)) => {
                let dims: std::result::Result<Vec<usize>, _> =
                    shape.split('x').map(|d| d.parse::<usize>()).collect();
                listed.push((name.to_string(), dims.map_err(|_| bad(format!("bad shape {shape}")))?));
            }
            _ => return Err(bad(format!("unexpected header line `{line}`"))),
        }
    }

    let get = |k: &str| {
        meta_kv
            .get(k)
            .cloned()
            .ok_or_else(|| bad(format!("missing metadata `{k}`")))
    };
    let num = |k: &str| -> Result<usize> {
        get(k)?.parse().map_err(|_| bad(format!("metadata `{k}` is not a count")))
    };
    let list = |k: &str| -> Result<Vec<usize>> {
        get(k)?
            .split(',')
            .map(|v| v.parse().map_err(|_| bad(format!("metadata `{k}` is not a list"))))
            .collect()
    };
    let decomposition = match get("decomposition")?.as_str() {
        "attention" => DecompositionKind::Attention,
        "parallel" => DecompositionKind::Parallel,
        "identity" => DecompositionKind::Identity,
        other => return Err(bad(format!("unknown decomposition `{other}`"))),
    };
    let config = ModelConfig {
        feat_dim: num("feat_dim")?,
        channels: num("channels")?,
        kernels: list("kernels")?,
        dilations: list("dilations")?,
        embed_dim: num("embed_dim")?,
        bottleneck_ratio: num("bottleneck_ratio")?,
        cos_dim: num("cos_dim")?,
        decomposition,
        pool_var_floor: get("pool_var_floor")?
            .parse()
            .map_err(|_| bad("bad pool_var_floor".into()))?,
    };
    let meta = CheckpointMeta {
        seed: get("seed")?.parse().map_err(|_| bad("bad seed".into()))?,
        step: get("step")?.parse().map_err(|_| bad("bad step".into()))?,
        extra: meta_kv
            .iter()
            .filter_map(|(k, v)| k.strip_prefix("x.").map(|k| (k.to_string(), v.clone())))
            .collect(),
    };

    let mut params = ModelParams::<f32>::new(config, num("num_speakers")?, 0)?;
    let mut payload = &bytes[pos..];
    {
        let tensors = params.tensors_mut();
        if tensors.len() != listed.len() {
            return Err(bad(format!(
                "{} tensors listed, model has {}",
                listed.len(),
                tensors.len()
            )));
        }
        for (t, (name, shape)) in tensors.into_iter().zip(&listed) {
            if &t.name != name || &t.shape != shape {
                return Err(bad(format!("tensor `{name}` {shape:?} does not match `{}`", t.name)));
            }
            let n = t.data.len() * 4;
            if payload.len() < n {
                return Err(bad(format!("payload truncated in `{name}`")));
            }
            for (v, c) in t.data.iter_mut().zip(payload[..n].chunks_exact(4)) {
                *v = f32::from_le_bytes(c.try_into().unwrap());
            }
            payload = &payload[n..];
        }
    }
    if !payload.is_empty() {
        return Err(bad(format!("{} trailing bytes", payload.len())));
    }
    Ok(Checkpoint { params, meta })
}
