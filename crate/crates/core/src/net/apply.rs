//! Evaluation-mode operations on meshes: decomposition, expression transfer
//! and latent interpolation. All use `z = μ`.

use ndarray::Array1;

use super::Model;
use crate::deform::DrFeature;
use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Identity, expression and fused reconstruction of one input mesh.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub identity: Mesh,
    pub expression: Mesh,
    pub reconstruction: Mesh,
}

/// Meshes decoded on a regular grid of interpolation weights.
#[derive(Debug, Clone)]
pub struct InterpolationGrid {
    /// Number of intervals per axis; the grid has `(steps + 1)²` meshes.
    pub steps: usize,
    /// Row-major: `meshes[a * (steps + 1) + b]` uses identity weight `a / steps`
    /// and expression weight `b / steps` toward the second mesh.
    pub meshes: Vec<Mesh>,
}

impl InterpolationGrid {
    pub fn get(&self, identity_step: usize, expression_step: usize) -> &Mesh {
        &self.meshes[identity_step * (self.steps + 1) + expression_step]
    }
}

fn lerp(a: &Array1<f64>, b: &Array1<f64>, t: f64) -> Array1<f64> {
    a * (1.0 - t) + b * t
}

impl Model {
    fn codes(&self, mesh: &Mesh) -> Result<(Array1<f64>, Array1<f64>)> {
        let f = self.frame().encode(mesh)?;
        Ok((self.encode_identity(&f)?.0, self.encode_expression(&f)?.0))
    }

    /// Mesh from an identity code and an expression code.
    pub fn synthesize(&self, z_id: &Array1<f64>, z_exp: &Array1<f64>) -> Result<Mesh> {
        let id = self.decode_identity(z_id)?;
        let exp = self.decode_expression(z_exp)?;
        self.frame().decode(&self.fuse(&id, &exp)?)
    }

    fn to_mesh(&self, f: &DrFeature) -> Result<Mesh> {
        self.frame().decode(f)
    }

    pub fn decompose(&self, mesh: &Mesh) -> Result<Decomposition> {
        let (z_id, z_exp) = self.codes(mesh)?;
        let id = self.decode_identity(&z_id)?;
        let exp = self.decode_expression(&z_exp)?;
        Ok(Decomposition {
            reconstruction: self.to_mesh(&self.fuse(&id, &exp)?)?,
            identity: self.to_mesh(&id)?,
            expression: self.to_mesh(&exp)?,
        })
    }

    /// The expression of `source` performed by the identity of `target`.
    pub fn transfer_expression(&self, source: &Mesh, target: &Mesh) -> Result<Mesh> {
        let (_, z_exp) = self.codes(source)?;
        let (z_id, _) = self.codes(target)?;
        self.synthesize(&z_id, &z_exp)
    }

    /// Interpolates identity and expression codes independently between two
    /// meshes with the given stride, which must divide 1.
    pub fn interpolate_latent(
        &self,
        m0: &Mesh,
        m1: &Mesh,
        stride: f64,
    ) -> Result<InterpolationGrid> {
        let steps = stride_steps(stride)?;
        let (id0, exp0) = self.codes(m0)?;
        let (id1, exp1) = self.codes(m1)?;
        let mut meshes = Vec::with_capacity((steps + 1) * (steps + 1));
        for a in 0..=steps {
            let z_id = lerp(&id0, &id1, a as f64 / steps as f64);
            let id = self.decode_identity(&z_id)?;
            for b in 0..=steps {
                let z_exp = lerp(&exp0, &exp1, b as f64 / steps as f64);
                let exp = self.decode_expression(&z_exp)?;
                meshes.push(self.to_mesh(&self.fuse(&id, &exp)?)?);
            }
        }
        Ok(InterpolationGrid { steps, meshes })
    }
}

/// Number of intervals for a stride that divides 1 evenly.
pub fn stride_steps(stride: f64) -> Result<usize> {
    if !(stride > 0.0 && stride <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "stride must lie in (0, 1], got {stride}"
        )));
    }
    let steps = (1.0 / stride).round();
    if (steps * stride - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "stride {stride} does not divide 1 evenly"
        )));
    }
    Ok(steps as usize)
}
