//! Model checkpoints: architecture plus every parameter array, including
//! batch-norm running statistics, in a versioned little-endian binary
//! format (magic `EEGCKPT\0`). Values are raw IEEE-754 bits, so a
//! save/load round-trip is exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use byteorder::{WriteBytesExt, LE};
use ndarray::{Array1, Array2, Array3, ArrayD, ArrayViewD, IxDyn};

use super::{ArchConfig, BnParams, LstmParams, ModelParams};
use crate::data::io::Reader;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"EEGCKPT\0";
const VERSION: u32 = 1;

fn write_array<W: Write>(w: &mut W, a: &ArrayViewD<'_, f64>) -> Result<()> {
    w.write_u32::<LE>(a.ndim() as u32)?;
    for &d in a.shape() {
        w.write_u64::<LE>(d as u64)?;
    }
    for &v in a.iter() {
        w.write_f64::<LE>(v)?;
    }
    Ok(())
}

fn read_array<R: std::io::Read>(r: &mut Reader<R>, want: &[usize]) -> Result<ArrayD<f64>> {
    let ndim = r.u32()? as usize;
    if ndim != want.len() {
        return Err(r.fail(format!("array rank {ndim}, expected {}", want.len())));
    }
    let mut dims = Vec::with_capacity(ndim);
    for i in 0..ndim {
        let d = r.u64()? as usize;
        if d != want[i] {
            return Err(r.fail(format!("axis {i} extent {d}, expected {}", want[i])));
        }
        dims.push(d);
    }
    let n: usize = dims.iter().product();
    r.check_count(n as u64, "array element")?;
    let data = r.f64_block(n)?;
    Ok(ArrayD::from_shape_vec(IxDyn(&dims), data).expect("shape matches element count"))
}

fn as2(a: ArrayD<f64>) -> Array2<f64> {
    a.into_dimensionality().expect("rank checked")
}
fn as1(a: ArrayD<f64>) -> Array1<f64> {
    a.into_dimensionality().expect("rank checked")
}

/// Every array of the model in serialization order.
fn all_arrays(p: &ModelParams) -> Vec<ArrayViewD<'_, f64>> {
    fn bn(b: &BnParams) -> Vec<ArrayViewD<'_, f64>> {
        vec![
            b.gamma.view().into_dyn(),
            b.beta.view().into_dyn(),
            b.running_mean.view().into_dyn(),
            b.running_var.view().into_dyn(),
        ]
    }
    fn lstm(l: &LstmParams) -> Vec<ArrayViewD<'_, f64>> {
        vec![
            l.w_f.view().into_dyn(),
            l.w_i.view().into_dyn(),
            l.w_o.view().into_dyn(),
            l.w_c.view().into_dyn(),
            l.b_f.view().into_dyn(),
            l.b_i.view().into_dyn(),
            l.b_o.view().into_dyn(),
            l.b_c.view().into_dyn(),
        ]
    }
    let mut out = vec![
        p.w_temp.view().into_dyn(),
        p.b_temp.view().into_dyn(),
        p.w_spat.view().into_dyn(),
    ];
    out.extend(bn(&p.bn1));
    out.extend(bn(&p.bn2));
    out.extend(lstm(&p.lstm_fwd));
    out.extend(lstm(&p.lstm_bwd));
    out.push(p.w_out.view().into_dyn());
    out.push(p.b_out.view().into_dyn());
    out
}

pub fn save_checkpoint(cfg: &ArchConfig, params: &ModelParams, path: &Path) -> Result<()> {
    cfg.validate()?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_u32::<LE>(VERSION)?;
    for v in [
        cfg.n_channels,
        cfg.n_time,
        cfg.segment_len,
        cfg.n_temporal_filters,
        cfg.depth_multiplier,
        cfg.lstm_hidden,
        cfg.n_classes,
    ] {
        w.write_u64::<LE>(v as u64)?;
    }
    for v in [cfg.dropout_rate, cfg.bn_epsilon, cfg.bn_momentum] {
        w.write_f64::<LE>(v)?;
    }
    for a in all_arrays(params) {
        write_array(&mut w, &a)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ArchConfig, ModelParams)> {
    let mut r = Reader::new(BufReader::new(File::open(path)?));
    r.check_magic(MAGIC, "model checkpoint")?;
    let v = r.u32()?;
    if v != VERSION {
        return Err(Error::Version {
            found: v,
            expected: VERSION,
        });
    }
    let mut dims = [0usize; 7];
    for d in &mut dims {
        let raw = r.u64()?;
        *d = r.check_count(raw, "architecture extent")? as usize;
    }
    let cfg = ArchConfig {
        n_channels: dims[0],
        n_time: dims[1],
        segment_len: dims[2],
        n_temporal_filters: dims[3],
        depth_multiplier: dims[4],
        lstm_hidden: dims[5],
        n_classes: dims[6],
        dropout_rate: r.f64()?,
        bn_epsilon: r.f64()?,
        bn_momentum: r.f64()?,
    };
    cfg.validate()
        .map_err(|e| r.fail(format!("invalid stored architecture: {e}")))?;

    let f1 = cfg.n_temporal_filters;
    let d = cfg.depth_multiplier;
    let (n_c, n_t, h, k) = (cfg.n_channels, cfg.segment_len, cfg.lstm_hidden, cfg.n_classes);
    let i = cfg.feature_width();

    let bn = |r: &mut Reader<BufReader<File>>, features: usize| -> Result<BnParams> {
        Ok(BnParams {
            gamma: as1(read_array(r, &[features])?),
            beta: as1(read_array(r, &[features])?),
            running_mean: as1(read_array(r, &[features])?),
            running_var: as1(read_array(r, &[features])?),
        })
    };
    let lstm = |r: &mut Reader<BufReader<File>>| -> Result<LstmParams> {
        Ok(LstmParams {
            w_f: as2(read_array(r, &[h, h + i])?),
            w_i: as2(read_array(r, &[h, h + i])?),
            w_o: as2(read_array(r, &[h, h + i])?),
            w_c: as2(read_array(r, &[h, h + i])?),
            b_f: as1(read_array(r, &[h])?),
            b_i: as1(read_array(r, &[h])?),
            b_o: as1(read_array(r, &[h])?),
            b_c: as1(read_array(r, &[h])?),
        })
    };

    let w_temp = as2(read_array(&mut r, &[f1, n_t])?);
    let b_temp = as1(read_array(&mut r, &[f1])?);
    let w_spat: Array3<f64> = read_array(&mut r, &[f1, d, n_c])?
        .into_dimensionality()
        .expect("rank checked");
    let bn1 = bn(&mut r, f1)?;
    let bn2 = bn(&mut r, i)?;
    let lstm_fwd = lstm(&mut r)?;
    let lstm_bwd = lstm(&mut r)?;
    let w_out = as2(read_array(&mut r, &[k, 2 * h])?);
    let b_out = as1(read_array(&mut r, &[k])?);
    r.expect_eof()?;

    Ok((
        cfg,
        ModelParams {
            w_temp,
            b_temp,
            w_spat,
            bn1,
            bn2,
            lstm_fwd,
            lstm_bwd,
            w_out,
            b_out,
        },
    ))
}
