//! Checkpoint directories: raw little-endian f32 tensors plus a text
//! manifest with shapes and SHA-256 checksums. Round-trips are bit-exact
//! for f32 models; optimizer moments ride along so training can resume.
//!
//! Layout:
//! ```text
//! <dir>/manifest.txt
//! <dir>/params/<name>.f32        one file per named parameter
//! <dir>/adam/<name>.f32          first moments then second moments
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{CoreError, Result};
use crate::model::{
    build_discriminator, build_generator, Discriminator, DiscriminatorConfig, Generator,
    GeneratorConfig,
};
use crate::optim::AdamState;
use crate::params::ParamSet;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const MAGIC: &str = "relight-checkpoint v1";

/// Everything a checkpoint can carry.
#[derive(Debug)]
pub struct LoadedCheckpoint<T> {
    pub generator: Generator<T>,
    pub discriminator: Option<Discriminator<T>>,
    /// Adam moments aligned with generator ParamSet order, when saved.
    pub gen_opt: Option<Vec<AdamState<T>>>,
    pub disc_opt: Option<Vec<AdamState<T>>>,
}

fn bad(name: &str, reason: impl Into<String>) -> CoreError {
    CoreError::Checkpoint {
        name: name.to_string(),
        reason: reason.into(),
    }
}

fn write_f32_file<T: Scalar>(path: &Path, values: &[T]) -> Result<(usize, String)> {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for v in values {
        bytes.extend_from_slice(&v.as_f32().to_le_bytes());
    }
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let digest = hasher.finalize();
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    let mut f = fs::File::create(path).map_err(|e| CoreError::io(path, e))?;
    f.write_all(&bytes).map_err(|e| CoreError::io(path, e))?;
    Ok((bytes.len(), hex))
}

fn read_f32_file<T: Scalar>(
    path: &Path,
    name: &str,
    want_bytes: usize,
    want_sha: &str,
) -> Result<Vec<T>> {
    let bytes = fs::read(path).map_err(|e| CoreError::io(path, e))?;
    if bytes.len() != want_bytes {
        return Err(bad(
            name,
            format!("expected {} bytes, found {}", want_bytes, bytes.len()),
        ));
    }
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let hex: String = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
    if hex != want_sha {
        return Err(bad(name, "checksum mismatch, file corrupted"));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| T::lit(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
        .collect())
}

fn shape_str(shape: &[usize]) -> String {
    shape
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join("x")
}

fn parse_shape(s: &str, name: &str) -> Result<Vec<usize>> {
    s.split('x')
        .map(|p| p.parse::<usize>().map_err(|_| bad(name, format!("bad shape field {s:?}"))))
        .collect()
}

fn save_params<T: Scalar>(
    dir: &Path,
    scope: &str,
    params: &ParamSet<T>,
    manifest: &mut String,
) -> Result<()> {
    for (name, tensor) in params.iter() {
        let rel = format!("params/{name}.f32");
        let (bytes, sha) = write_f32_file(&dir.join(&rel), tensor.data())?;
        manifest.push_str(&format!(
            "tensor {scope} {name} shape={} bytes={bytes} sha256={sha} file={rel}\n",
            shape_str(tensor.shape())
        ));
    }
    Ok(())
}

fn save_adam<T: Scalar>(
    dir: &Path,
    scope: &str,
    params: &ParamSet<T>,
    states: &[AdamState<T>],
    manifest: &mut String,
) -> Result<()> {
    if states.len() != params.len() {
        return Err(CoreError::InvalidArgument(format!(
            "{scope}: {} optimizer states for {} parameters",
            states.len(),
            params.len()
        )));
    }
    for (i, st) in states.iter().enumerate() {
        let name = params.name(i);
        let mut joined = st.m().to_vec();
        joined.extend_from_slice(st.v());
        let rel = format!("adam/{name}.f32");
        let (bytes, sha) = write_f32_file(&dir.join(&rel), &joined)?;
        manifest.push_str(&format!(
            "adam {scope} {name} t={} bytes={bytes} sha256={sha} file={rel}\n",
            st.t()
        ));
    }
    Ok(())
}

/// Writes a complete checkpoint. Optimizer states are optional (pass `None`
/// for inference-only exports), as is the discriminator.
pub fn save_checkpoint<T: Scalar>(
    dir: &Path,
    generator: &Generator<T>,
    gen_opt: Option<&[AdamState<T>]>,
    discriminator: Option<&Discriminator<T>>,
    disc_opt: Option<&[AdamState<T>]>,
) -> Result<()> {
    fs::create_dir_all(dir.join("params")).map_err(|e| CoreError::io(dir, e))?;
    fs::create_dir_all(dir.join("adam")).map_err(|e| CoreError::io(dir, e))?;

    let g = generator.config();
    let mut manifest = format!("{MAGIC}\n");
    manifest.push_str(&format!(
        "gen levels={} encoder_depth={} min_patch_size={} leaky_slope={} base_channels={}\n",
        g.levels,
        g.encoder_depth,
        g.min_patch_size,
        g.leaky_slope.to_f64().unwrap(),
        g.base_channels
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(",")
    ));
    if let Some(d) = discriminator {
        manifest.push_str(&format!(
            "disc base_channels={} leaky_slope={}\n",
            d.config().base_channels,
            d.config().leaky_slope.to_f64().unwrap()
        ));
    }
    save_params(dir, "gen", generator.params(), &mut manifest)?;
    if let Some(states) = gen_opt {
        save_adam(dir, "gen", generator.params(), states, &mut manifest)?;
    }
    if let Some(d) = discriminator {
        save_params(dir, "disc", d.params(), &mut manifest)?;
        if let Some(states) = disc_opt {
            save_adam(dir, "disc", d.params(), states, &mut manifest)?;
        }
    }

    let path = dir.join("manifest.txt");
    fs::write(&path, manifest).map_err(|e| CoreError::io(&path, e))
}

struct Entry {
    shape: Vec<usize>,
    bytes: usize,
    sha: String,
    file: String,
    adam_t: u64,
}

fn parse_kv<'a>(token: &'a str, key: &str, name: &str) -> Result<&'a str> {
    token
        .strip_prefix(key)
        .and_then(|r| r.strip_prefix('='))
        .ok_or_else(|| bad(name, format!("expected {key}=..., got {token:?}")))
}

fn fill_params<T: Scalar>(
    dir: &Path,
    scope: &str,
    params: &mut ParamSet<T>,
    tensors: &BTreeMap<String, Entry>,
) -> Result<()> {
    for (name, entry) in tensors {
        let full = format!("{scope}.{name}");
        let tensor = params
            .by_name_mut(name)
            .ok_or_else(|| bad(&full, "manifest names a parameter the model does not have"))?;
        if tensor.shape() != entry.shape.as_slice() {
            return Err(bad(
                &full,
                format!(
                    "shape mismatch: model {:?}, manifest {:?}",
                    tensor.shape(),
                    entry.shape
                ),
            ));
        }
        let data = read_f32_file::<T>(&dir.join(&entry.file), &full, entry.bytes, &entry.sha)?;
        if data.len() != tensor.numel() {
            return Err(bad(&full, "element count disagrees with shape"));
        }
        *tensor = Tensor::new(entry.shape.clone(), data)?;
    }
    for i in 0..params.len() {
        if !tensors.contains_key(params.name(i)) {
            return Err(bad(
                &format!("{scope}.{}", params.name(i)),
                "parameter missing from manifest",
            ));
        }
    }
    Ok(())
}

fn load_adam<T: Scalar>(
    dir: &Path,
    scope: &str,
    params: &ParamSet<T>,
    entries: &BTreeMap<String, Entry>,
) -> Result<Option<Vec<AdamState<T>>>> {
    if entries.is_empty() {
        return Ok(None);
    }
    let mut out = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let name = params.name(i);
        let full = format!("{scope}.{name}");
        let entry = entries
            .get(name)
            .ok_or_else(|| bad(&full, "optimizer state missing from manifest"))?;
        let numel = params.get(i).numel();
        let joined = read_f32_file::<T>(&dir.join(&entry.file), &full, entry.bytes, &entry.sha)?;
        if joined.len() != 2 * numel {
            return Err(bad(&full, "optimizer buffer length disagrees with parameter"));
        }
        let (m, v) = joined.split_at(numel);
        out.push(AdamState::from_parts(m.to_vec(), v.to_vec(), entry.adam_t)?);
    }
    Ok(Some(out))
}

/// Reads a checkpoint directory back into freshly built models.
pub fn load_checkpoint<T: Scalar>(dir: &Path) -> Result<LoadedCheckpoint<T>> {
    let path = dir.join("manifest.txt");
    let text = fs::read_to_string(&path).map_err(|e| CoreError::io(&path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(MAGIC) {
        return Err(bad("manifest", format!("missing {MAGIC:?} header")));
    }

    let mut gen_config: Option<GeneratorConfig<T>> = None;
    let mut disc_config: Option<DiscriminatorConfig<T>> = None;
    let mut gen_tensors: BTreeMap<String, Entry> = BTreeMap::new();
    let mut disc_tensors: BTreeMap<String, Entry> = BTreeMap::new();
    let mut gen_adam: BTreeMap<String, Entry> = BTreeMap::new();
    let mut disc_adam: BTreeMap<String, Entry> = BTreeMap::new();

    for line in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let kind = parts.next().unwrap();
        match kind {
            "gen" => {
                let mut cfg = GeneratorConfig::<T>::default();
                for tok in parts {
                    let (key, val) = tok
                        .split_once('=')
                        .ok_or_else(|| bad("manifest", format!("bad gen field {tok:?}")))?;
                    match key {
                        "levels" => cfg.levels = val.parse().map_err(|_| bad("manifest", "bad levels"))?,
                        "encoder_depth" => {
                            cfg.encoder_depth =
                                val.parse().map_err(|_| bad("manifest", "bad encoder_depth"))?
                        }
                        "min_patch_size" => {
                            cfg.min_patch_size =
                                val.parse().map_err(|_| bad("manifest", "bad min_patch_size"))?
                        }
                        "leaky_slope" => {
                            cfg.leaky_slope = T::lit(
                                val.parse::<f64>().map_err(|_| bad("manifest", "bad leaky_slope"))?,
                            )
                        }
                        "base_channels" => {
                            cfg.base_channels = val
                                .split(',')
                                .map(|c| c.parse().map_err(|_| bad("manifest", "bad base_channels")))
                                .collect::<Result<_>>()?
                        }
                        _ => return Err(bad("manifest", format!("unknown gen field {key:?}"))),
                    }
                }
                gen_config = Some(cfg);
            }
            "disc" => {
                let mut cfg = DiscriminatorConfig::<T>::default();
                for tok in parts {
                    let (key, val) = tok
                        .split_once('=')
                        .ok_or_else(|| bad("manifest", format!("bad disc field {tok:?}")))?;
                    match key {
                        "base_channels" => {
                            cfg.base_channels =
                                val.parse().map_err(|_| bad("manifest", "bad base_channels"))?
                        }
                        "leaky_slope" => {
                            cfg.leaky_slope = T::lit(
                                val.parse::<f64>().map_err(|_| bad("manifest", "bad leaky_slope"))?,
                            )
                        }
                        _ => return Err(bad("manifest", format!("unknown disc field {key:?}"))),
                    }
                }
                disc_config = Some(cfg);
            }
            "tensor" | "adam" => {
                let scope = parts
                    .next()
                    .ok_or_else(|| bad("manifest", "tensor line missing scope"))?;
                let name = parts
                    .next()
                    .ok_or_else(|| bad("manifest", "tensor line missing name"))?
                    .to_string();
                let mut shape = Vec::new();
                let mut bytes = 0usize;
                let mut sha = String::new();
                let mut file = String::new();
                let mut adam_t = 0u64;
                for tok in parts {
                    if let Ok(v) = parse_kv(tok, "shape", &name) {
                        shape = parse_shape(v, &name)?;
                    } else if let Ok(v) = parse_kv(tok, "bytes", &name) {
                        bytes = v.parse().map_err(|_| bad(&name, "bad bytes field"))?;
                    } else if let Ok(v) = parse_kv(tok, "sha256", &name) {
                        sha = v.to_string();
                    } else if let Ok(v) = parse_kv(tok, "file", &name) {
                        file = v.to_string();
                    } else if let Ok(v) = parse_kv(tok, "t", &name) {
                        adam_t = v.parse().map_err(|_| bad(&name, "bad t field"))?;
                    } else {
                        return Err(bad(&name, format!("unknown field {tok:?}")));
                    }
                }
                if file.is_empty() || sha.is_empty() {
                    return Err(bad(&name, "incomplete manifest line"));
                }
                let entry = Entry {
                    shape,
                    bytes,
                    sha,
                    file,
                    adam_t,
                };
                let map = match (kind, scope) {
                    ("tensor", "gen") => &mut gen_tensors,
                    ("tensor", "disc") => &mut disc_tensors,
                    ("adam", "gen") => &mut gen_adam,
                    ("adam", "disc") => &mut disc_adam,
                    _ => return Err(bad(&name, format!("unknown scope {scope:?}"))),
                };
                if map.insert(name.clone(), entry).is_some() {
                    return Err(bad(&name, "duplicate manifest entry"));
                }
            }
            _ => return Err(bad("manifest", format!("unknown line kind {kind:?}"))),
        }
    }

    let gen_config = gen_config.ok_or_else(|| bad("manifest", "missing gen config line"))?;
    let mut generator = build_generator(gen_config, 0)?;
    fill_params(dir, "gen", generator.params_mut(), &gen_tensors)?;
    let gen_opt = load_adam(dir, "gen", generator.params(), &gen_adam)?;

    let mut discriminator = None;
    let mut disc_opt = None;
    if let Some(cfg) = disc_config {
        let mut d = build_discriminator(cfg, 0)?;
        fill_params(dir, "disc", d.params_mut(), &disc_tensors)?;
        disc_opt = load_adam(dir, "disc", d.params(), &disc_adam)?;
        discriminator = Some(d);
    } else if !disc_tensors.is_empty() {
        return Err(bad("manifest", "disc tensors present without a disc config line"));
    }

    Ok(LoadedCheckpoint {
        generator,
        discriminator,
        gen_opt,
        disc_opt,
    })
}
