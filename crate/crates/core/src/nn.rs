//! Layer helpers shared by the models.

use autodiff::{Conv1dOptions, Graph, PadMode, Real, TensorError, Var};

use crate::error::{Result, VocoderError};
use crate::params::Bound;

/// Slope of every leaky ReLU in the models.
pub const LEAKY_SLOPE: f64 = 0.2;

pub(crate) fn in_layer(layer: &str) -> impl FnOnce(TensorError) -> VocoderError + '_ {
    move |e| VocoderError::layer(layer, e.to_string())
}

fn weight_and_bias(p: &Bound, layer: &str) -> Result<(Var, Var)> {
    Ok((p.get(&format!("{layer}.weight"))?, p.get(&format!("{layer}.bias"))?))
}

fn check_channels<T: Real>(g: &Graph<T>, layer: &str, x: Var, w: Var, groups: usize) -> Result<()> {
    let cin = g.shape(x).get(1).copied().unwrap_or(0);
    let expect = g.shape(w)[1] * groups;
    if cin != expect {
        return Err(VocoderError::layer(
            layer,
            format!("expected {expect} input channels, got {cin}"),
        ));
    }
    Ok(())
}

pub(crate) fn conv1d<T: Real>(g: &mut Graph<T>, p: &Bound, layer: &str, x: Var, opts: Conv1dOptions) -> Result<Var> {
    let (w, b) = weight_and_bias(p, layer)?;
    check_channels(g, layer, x, w, opts.groups)?;
    g.conv1d(x, w, Some(b), opts).map_err(in_layer(layer))
}

/// Length-preserving convolution (odd kernel). Pads by reflection, or with
/// zeros when the signal is too short to reflect.
pub(crate) fn conv1d_same<T: Real>(g: &mut Graph<T>, p: &Bound, layer: &str, x: Var, dilation: usize) -> Result<Var> {
    let (w, b) = weight_and_bias(p, layer)?;
    check_channels(g, layer, x, w, 1)?;
    let k = g.shape(w)[2];
    let pad = dilation * (k - 1) / 2;
    let len = g.shape(x)[2];
    let x = if pad == 0 {
        x
    } else {
        let mode = if pad < len { PadMode::Reflect } else { PadMode::Zero };
        g.pad1d(x, pad, pad, mode).map_err(in_layer(layer))?
    };
    let opts = Conv1dOptions::default().dilation(dilation);
    g.conv1d(x, w, Some(b), opts).map_err(in_layer(layer))
}

pub(crate) fn conv_transpose1d<T: Real>(g: &mut Graph<T>, p: &Bound, layer: &str, x: Var, stride: usize) -> Result<Var> {
    let (w, b) = weight_and_bias(p, layer)?;
    let cin = g.shape(x).get(1).copied().unwrap_or(0);
    if cin != g.shape(w)[0] {
        return Err(VocoderError::layer(
            layer,
            format!("expected {} input channels, got {cin}", g.shape(w)[0]),
        ));
    }
    g.conv_transpose1d(x, w, Some(b), stride).map_err(in_layer(layer))
}

pub(crate) fn conv2d<T: Real>(g: &mut Graph<T>, p: &Bound, layer: &str, x: Var, stride: usize, padding: usize) -> Result<Var> {
    let (w, b) = weight_and_bias(p, layer)?;
    check_channels(g, layer, x, w, 1)?;
    g.conv2d(x, w, Some(b), stride, padding).map_err(in_layer(layer))
}

pub(crate) fn leaky<T: Real>(g: &mut Graph<T>, x: Var) -> Result<Var> {
    Ok(g.leaky_relu(x, LEAKY_SLOPE)?)
}
