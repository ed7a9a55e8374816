//! Plain-text network checkpoints.
//!
//! ```text
//! ebdnn-network 1
//! widths 1 60 10 1
//! layer 0 weights 60 1
//! <one matrix row per line, space separated>
//! layer 0 bias 60
//! <values>
//! ...
//! layer 2 weights 1 10
//! <values>
//! end
//! ```
//!
//! Values use Rust's shortest round-trip scientific notation, so a write
//! followed by a read reproduces every parameter bit for bit.

use std::io::{BufRead, Write};

use super::{NetError, Network};
use crate::synth::NetShape;

pub const CHECKPOINT_MAGIC: &str = "ebdnn-network";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(net: &Network, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}")?;
    let widths = net.shape().widths();
    writeln!(w, "widths {}", join(widths.iter().map(|v| v.to_string())))?;
    for l in 0..net.depth() {
        let lay = net.layout[l];
        writeln!(w, "layer {l} weights {} {}", lay.outputs, lay.inputs)?;
        for row in net.weights(l).chunks_exact(lay.inputs) {
            writeln!(w, "{}", join(row.iter().map(|v| format!("{v:e}"))))?;
        }
        if let Some(b) = net.bias(l) {
            writeln!(w, "layer {l} bias {}", lay.outputs)?;
            writeln!(w, "{}", join(b.iter().map(|v| format!("{v:e}"))))?;
        }
    }
    writeln!(w, "end")
}

fn join(items: impl Iterator<Item = String>) -> String {
    items.collect::<Vec<_>>().join(" ")
}

pub fn read_checkpoint<R: BufRead>(r: R) -> Result<Network, NetError> {
    let mut lines = r.lines().enumerate().map(|(i, l)| l.map(|l| (i + 1, l)));
    let mut next = |what: &str| -> Result<(usize, String), NetError> {
        match lines.next() {
            Some(Ok(line)) => Ok(line),
            Some(Err(e)) => Err(NetError::Checkpoint(e.to_string())),
            None => Err(NetError::Checkpoint(format!("unexpected end of file, expected {what}"))),
        }
    };
    let bad = |line: usize, msg: &str| NetError::Checkpoint(format!("line {line}: {msg}"));

    let (ln, header) = next("header")?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some(CHECKPOINT_MAGIC) {
        return Err(bad(ln, "not an ebdnn network checkpoint"));
    }
    match parts.next().map(str::parse::<u32>) {
        Some(Ok(CHECKPOINT_VERSION)) => {}
        _ => return Err(bad(ln, "unsupported checkpoint version")),
    }

    let (ln, widths_line) = next("widths")?;
    let widths: Vec<usize> = widths_line
        .strip_prefix("widths ")
        .ok_or_else(|| bad(ln, "expected widths"))?
        .split_whitespace()
        .map(str::parse)
        .collect::<Result<_, _>>()
        .map_err(|_| bad(ln, "malformed width"))?;
    if widths.len() < 3 || widths[widths.len() - 1] != 1 {
        return Err(bad(ln, "need input, at least one hidden layer, and output width 1"));
    }
    let shape = NetShape::new(widths[0], widths[1..widths.len() - 1].to_vec()).map_err(|e| bad(ln, &e.to_string()))?;
    let mut net = Network::zeros(shape);

    let mut params = Vec::with_capacity(net.params.len());
    let layout = net.layout.clone();
    for (l, lay) in layout.iter().enumerate() {
        let (ln, head) = next("layer header")?;
        if head != format!("layer {l} weights {} {}", lay.outputs, lay.inputs) {
            return Err(bad(ln, "layer header does not match widths"));
        }
        for _ in 0..lay.outputs {
            let (ln, row) = next("weight row")?;
            read_values(&row, lay.inputs, &mut params).map_err(|m| bad(ln, &m))?;
        }
        if lay.bias.is_some() {
            let (ln, head) = next("bias header")?;
            if head != format!("layer {l} bias {}", lay.outputs) {
                return Err(bad(ln, "bias header does not match widths"));
            }
            let (ln, row) = next("bias values")?;
            read_values(&row, lay.outputs, &mut params).map_err(|m| bad(ln, &m))?;
        }
    }
    let (ln, end) = next("end")?;
    if end.trim() != "end" {
        return Err(bad(ln, "expected end"));
    }
    net.set_parameters(&params)?;
    Ok(net)
}

fn read_values(line: &str, expected: usize, out: &mut Vec<f64>) -> Result<(), String> {
    let before = out.len();
    for tok in line.split_whitespace() {
        out.push(tok.parse::<f64>().map_err(|_| format!("malformed number {tok:?}"))?);
    }
    if out.len() - before != expected {
        return Err(format!("expected {expected} values, got {}", out.len() - before));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralnet::init_network;

    #[test]
    fn round_trip_is_bit_exact() {
        let net = init_network(NetShape::new(2, vec![5, 4, 3]).unwrap(), 11);
        let mut buf = Vec::new();
        write_checkpoint(&net, &mut buf).unwrap();
        let back = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(back, net);
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("ebdnn-network 1\nwidths 2 5 4 3 1\nlayer 0 weights 5 2\n"));
    }

    #[test]
    fn rejects_malformed_files() {
        assert!(read_checkpoint("nope 1\n".as_bytes()).is_err());
        assert!(read_checkpoint("ebdnn-network 2\n".as_bytes()).is_err());
        let truncated = "ebdnn-network 1\nwidths 1 1 1\nlayer 0 weights 1 1\n1e0\n";
        assert!(read_checkpoint(truncated.as_bytes()).is_err());
        let ok = "ebdnn-network 1\nwidths 1 1 1\nlayer 0 weights 1 1\n1e0\nlayer 0 bias 1\n-5e-1\nlayer 1 weights 1 1\n2e0\nend\n";
        let net = read_checkpoint(ok.as_bytes()).unwrap();
        assert_eq!(net.forward(&[0.75]).unwrap().0, 0.5);
    }
}
