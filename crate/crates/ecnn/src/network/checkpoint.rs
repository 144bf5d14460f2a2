//! Versioned binary trunk checkpoints. Little-endian, bit-exact round trip.

use super::{Activation, CsbnState, TrunkConfig, TrunkNetwork};
use std::io::{self, Read, Write};

const MAGIC: &[u8; 8] = b"ECNNTK01";

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad checkpoint magic")]
    BadMagic,
    #[error("checkpoint payload is inconsistent: {0}")]
    Corrupt(&'static str),
}

fn write_u64(w: &mut impl Write, v: u64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn write_f64s(w: &mut impl Write, vs: &[f64]) -> io::Result<()> {
    write_u64(w, vs.len() as u64)?;
    for v in vs {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u64(r: &mut impl Read) -> io::Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64s(r: &mut impl Read) -> Result<Vec<f64>, CheckpointError> {
    let n = read_u64(r)? as usize;
    if n > 1 << 30 {
        return Err(CheckpointError::Corrupt("vector length out of range"));
    }
    let mut out = Vec::with_capacity(n);
    let mut buf = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut buf)?;
        out.push(f64::from_le_bytes(buf));
    }
    Ok(out)
}

pub fn save_trunk(trunk: &TrunkNetwork, w: &mut impl Write) -> Result<(), CheckpointError> {
    w.write_all(MAGIC)?;
    let c = &trunk.config;
    for v in [
        c.channels, c.samples, c.f1, c.f2, c.kernel_t, c.stride, c.pool,
    ] {
        write_u64(w, v as u64)?;
    }
    write_u64(w, matches!(c.activation, Activation::Elu) as u64)?;
    w.write_all(&c.bn_epsilon.to_le_bytes())?;
    w.write_all(&c.bn_momentum.to_le_bytes())?;
    write_u64(w, trunk.seed)?;
    write_f64s(w, &trunk.params)?;
    for state in [&trunk.csbn1, &trunk.csbn2] {
        write_f64s(w, &state.running_mean)?;
        write_f64s(w, &state.running_var)?;
    }
    Ok(())
}

pub fn load_trunk(r: &mut impl Read) -> Result<TrunkNetwork, CheckpointError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let mut ints = [0u64; 7];
    for v in ints.iter_mut() {
        *v = read_u64(r)?;
    }
    let activation = if read_u64(r)? == 1 { Activation::Elu } else { Activation::Relu };
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    let bn_epsilon = f64::from_le_bytes(buf);
    r.read_exact(&mut buf)?;
    let bn_momentum = f64::from_le_bytes(buf);
    let seed = read_u64(r)?;
    let config = TrunkConfig {
        channels: ints[0] as usize,
        samples: ints[1] as usize,
        f1: ints[2] as usize,
        f2: ints[3] as usize,
        kernel_t: ints[4] as usize,
        stride: ints[5] as usize,
        pool: ints[6] as usize,
        activation,
        bn_epsilon,
        bn_momentum,
    };
    let params = read_f64s(r)?;
    if params.len() != config.param_count() {
        return Err(CheckpointError::Corrupt("parameter count mismatch"));
    }
    let mut states = Vec::new();
    for maps in [config.f1, config.f2] {
        let running_mean = read_f64s(r)?;
        let running_var = read_f64s(r)?;
        if running_mean.len() != maps || running_var.len() != maps {
            return Err(CheckpointError::Corrupt("running statistics length mismatch"));
        }
        states.push(CsbnState {
            running_mean,
            running_var,
            epsilon: bn_epsilon,
            momentum: bn_momentum,
        });
    }
    let csbn2 = states.pop().unwrap();
    let csbn1 = states.pop().unwrap();
    let mut trunk = TrunkNetwork::new(config, seed)
        .map_err(|_| CheckpointError::Corrupt("invalid configuration"))?;
    trunk.params = params;
    trunk.csbn1 = csbn1;
    trunk.csbn2 = csbn2;
    Ok(trunk)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let cfg = TrunkConfig::compact(3, 64);
        let mut trunk = TrunkNetwork::new(cfg, 42).unwrap();
        trunk.csbn1.running_mean[0] = 0.123456789123456789;
        trunk.csbn2.running_var[1] = 9.87654321e-7;
        let mut buf = Vec::new();
        save_trunk(&trunk, &mut buf).unwrap();
        let loaded = load_trunk(&mut buf.as_slice()).unwrap();
        assert_eq!(loaded.params, trunk.params);
        assert_eq!(loaded.csbn1, trunk.csbn1);
        assert_eq!(loaded.csbn2, trunk.csbn2);
        assert_eq!(loaded.config, trunk.config);
        assert_eq!(loaded.seed, trunk.seed);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let buf = b"NOTMAGIC________".to_vec();
        assert!(matches!(load_trunk(&mut buf.as_slice()), Err(CheckpointError::BadMagic)));
    }

    #[test]
    fn truncated_file_is_an_io_error() {
        let cfg = TrunkConfig::compact(2, 64);
        let trunk = TrunkNetwork::new(cfg, 1).unwrap();
        let mut buf = Vec::new();
        save_trunk(&trunk, &mut buf).unwrap();
        buf.truncate(buf.len() / 2);
        assert!(load_trunk(&mut buf.as_slice()).is_err());
    }
}
