//! Mesh export: Wavefront OBJ with MTL and PNG sidecars, and binary glTF.

use crate::error::{Error, Result};
use crate::io::{write_bytes, write_png8};
use crate::mesh::TexturedMesh;
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    Glb,
}

impl std::str::FromStr for MeshFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "obj" => Ok(MeshFormat::Obj),
            "glb" | "gltf-binary" => Ok(MeshFormat::Glb),
            other => Err(Error::Config(format!("unsupported mesh format `{other}`"))),
        }
    }
}

const UNTEXTURED_GRAY: f64 = 0.5;

/// Faces grouped by material, `None` (untextured) last.
fn groups(mesh: &TexturedMesh) -> Vec<(Option<u32>, Vec<usize>)> {
    let mut by: BTreeMap<(bool, u32), Vec<usize>> = BTreeMap::new();
    for (f, m) in mesh.material.iter().enumerate() {
        by.entry((m.is_none(), m.unwrap_or(0))).or_default().push(f);
    }
    by.into_iter().map(|((none, m), faces)| (if none { None } else { Some(m) }, faces)).collect()
}

/// Writes `<stem>.obj`, `<stem>.mtl` and one `<stem>_tex<k>.png` per texture
/// next to `obj_path`. Returns every written path.
pub fn write_obj(mesh: &TexturedMesh, obj_path: &Path) -> Result<Vec<PathBuf>> {
    mesh.validate()?;
    let stem = obj_path.file_stem().and_then(|s| s.to_str()).unwrap_or("mesh").to_owned();
    let dir = obj_path.parent().unwrap_or(Path::new("."));
    let mtl_name = format!("{stem}.mtl");
    let mut written = Vec::new();
    let mut obj = String::new();
    obj.push_str("# units: meters, +Z up\n");
    obj.push_str(&format!("mtllib {mtl_name}\n"));
    for v in &mesh.vertices {
        obj.push_str(&format!("v {} {} {}\n", v[0], v[1], v[2]));
    }
    // OBJ texture v grows upward.
    for uv in &mesh.uv {
        for c in uv {
            obj.push_str(&format!("vt {} {}\n", c[0], 1.0 - c[1]));
        }
    }
    for (m, faces) in groups(mesh) {
        obj.push_str(&format!("usemtl {}\n", m.map_or("untextured".to_string(), |m| format!("tex{m}"))));
        for f in faces {
            let [a, b, c] = mesh.faces[f];
            let t = 3 * f + 1;
            obj.push_str(&format!("f {}/{} {}/{} {}/{}\n", a + 1, t, b + 1, t + 1, c + 1, t + 2));
        }
    }
    write_bytes(obj_path, obj.as_bytes())?;
    written.push(obj_path.to_path_buf());
    let mut mtl = String::new();
    for (k, tex) in mesh.textures.iter().enumerate() {
        let png = format!("{stem}_tex{k}.png");
        let p = dir.join(&png);
        write_png8(&p, tex)?;
        written.push(p);
        mtl.push_str(&format!("newmtl tex{k}\nKa 1 1 1\nKd 1 1 1\nKs 0 0 0\nmap_Kd {png}\n\n"));
    }
    mtl.push_str(&format!("newmtl untextured\nKd {g} {g} {g}\nKs 0 0 0\n", g = UNTEXTURED_GRAY));
    let p = dir.join(&mtl_name);
    write_bytes(&p, mtl.as_bytes())?;
    written.push(p);
    Ok(written)
}

fn pad_to4(buf: &mut Vec<u8>, byte: u8) {
    while buf.len() % 4 != 0 {
        buf.push(byte);
    }
}

/// Binary glTF 2.0. Corners are unrolled (UVs are per face corner), one
/// primitive per material; positions stay in z-up meters and the root node
/// rotates them into glTF's y-up frame.
pub fn glb_bytes(mesh: &TexturedMesh) -> Result<Vec<u8>> {
    mesh.validate()?;
    let mut bin: Vec<u8> = Vec::new();
    let mut views: Vec<Value> = Vec::new();
    let mut accessors: Vec<Value> = Vec::new();
    let mut push_view = |bin: &mut Vec<u8>, data: &[u8], target: Option<u32>| -> usize {
        pad_to4(bin, 0);
        let mut v = json!({"buffer": 0, "byteOffset": bin.len(), "byteLength": data.len()});
        if let Some(t) = target {
            v["target"] = json!(t);
        }
        bin.extend_from_slice(data);
        views.push(v);
        views.len() - 1
    };
    let mut primitives = Vec::new();
    let tex_count = mesh.textures.len();
    for (m, faces) in groups(mesh) {
        let n = faces.len() * 3;
        let mut pos = Vec::with_capacity(n * 12);
        let mut uv = Vec::with_capacity(n * 8);
        let (mut lo, mut hi) = ([f32::INFINITY; 3], [f32::NEG_INFINITY; 3]);
        for &f in &faces {
            for (k, &vi) in mesh.faces[f].iter().enumerate() {
                let v = mesh.vertices[vi as usize];
                for a in 0..3 {
                    let x = v[a] as f32;
                    lo[a] = lo[a].min(x);
                    hi[a] = hi[a].max(x);
                    pos.extend_from_slice(&x.to_le_bytes());
                }
                for a in 0..2 {
                    uv.extend_from_slice(&(mesh.uv[f][k][a] as f32).to_le_bytes());
                }
            }
        }
        let idx: Vec<u8> = (0..n as u32).flat_map(|i| i.to_le_bytes()).collect();
        let pv = push_view(&mut bin, &pos, Some(34962));
        accessors.push(json!({"bufferView": pv, "componentType": 5126, "count": n, "type": "VEC3", "min": lo, "max": hi}));
        let pa = accessors.len() - 1;
        let mut attributes = json!({"POSITION": pa});
        if m.is_some() {
            let uvv = push_view(&mut bin, &uv, Some(34962));
            accessors.push(json!({"bufferView": uvv, "componentType": 5126, "count": n, "type": "VEC2"}));
            attributes["TEXCOORD_0"] = json!(accessors.len() - 1);
        }
        let iv = push_view(&mut bin, &idx, Some(34963));
        accessors.push(json!({"bufferView": iv, "componentType": 5125, "count": n, "type": "SCALAR"}));
        let material = m.map_or(tex_count, |m| m as usize);
        primitives.push(json!({"attributes": attributes, "indices": accessors.len() - 1, "material": material, "mode": 4}));
    }
    let mut images = Vec::new();
    let mut textures = Vec::new();
    let mut materials = Vec::new();
    for (k, tex) in mesh.textures.iter().enumerate() {
        let mut png = std::io::Cursor::new(Vec::new());
        let data: Vec<u8> = tex.data().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
        let (w, h) = (tex.width() as u32, tex.height() as u32);
        match tex.channels() {
            3 => image::RgbImage::from_raw(w, h, data).unwrap().write_to(&mut png, image::ImageFormat::Png)?,
            1 => image::GrayImage::from_raw(w, h, data).unwrap().write_to(&mut png, image::ImageFormat::Png)?,
            c => return Err(Error::Contract(format!("texture {k} has {c} channels"))),
        }
        let v = push_view(&mut bin, &png.into_inner(), None);
        images.push(json!({"bufferView": v, "mimeType": "image/png"}));
        textures.push(json!({"sampler": 0, "source": k}));
        materials.push(json!({
            "name": format!("tex{k}"),
            "pbrMetallicRoughness": {"baseColorTexture": {"index": k}, "metallicFactor": 0.0, "roughnessFactor": 1.0},
            "doubleSided": true
        }));
    }
    let g = UNTEXTURED_GRAY;
    materials.push(json!({
        "name": "untextured",
        "pbrMetallicRoughness": {"baseColorFactor": [g, g, g, 1.0], "metallicFactor": 0.0, "roughnessFactor": 1.0},
        "doubleSided": true
    }));
    pad_to4(&mut bin, 0);
    let mut doc = json!({
        "asset": {"version": "2.0", "generator": "geoscene", "extras": {"units": "meters", "sourceUpAxis": "+Z"}},
        "scene": 0,
        "scenes": [{"nodes": [0]}],
        "nodes": [{"mesh": 0, "rotation": [-std::f64::consts::FRAC_1_SQRT_2, 0.0, 0.0, std::f64::consts::FRAC_1_SQRT_2]}],
        "meshes": [{"primitives": primitives}],
        "accessors": accessors,
        "bufferViews": views,
        "buffers": [{"byteLength": bin.len()}],
        "materials": materials,
    });
    if !images.is_empty() {
        doc["images"] = json!(images);
        doc["textures"] = json!(textures);
        doc["samplers"] = json!([{"magFilter": 9729, "minFilter": 9729, "wrapS": 33071, "wrapT": 33071}]);
    }
    let mut js = serde_json::to_vec(&doc)?;
    pad_to4(&mut js, b' ');
    let total = 12 + 8 + js.len() + 8 + bin.len();
    let mut out = Vec::with_capacity(total);
    out.extend_from_slice(b"glTF");
    out.extend_from_slice(&2u32.to_le_bytes());
    out.extend_from_slice(&(total as u32).to_le_bytes());
    out.extend_from_slice(&(js.len() as u32).to_le_bytes());
    out.extend_from_slice(b"JSON");
    out.extend_from_slice(&js);
    out.extend_from_slice(&(bin.len() as u32).to_le_bytes());
    out.extend_from_slice(b"BIN\0");
    out.extend_from_slice(&bin);
    Ok(out)
}

pub fn write_glb(mesh: &TexturedMesh, path: &Path) -> Result<Vec<PathBuf>> {
    write_bytes(path, &glb_bytes(mesh)?)?;
    Ok(vec![path.to_path_buf()])
}

pub fn export_mesh(mesh: &TexturedMesh, format: MeshFormat, path: &Path) -> Result<Vec<PathBuf>> {
    match format {
        MeshFormat::Obj => write_obj(mesh, path),
        MeshFormat::Glb => write_glb(mesh, path),
    }
}

/// Vertex positions of a GLB written by [`glb_bytes`], in file order of the
/// primitives (unrolled corners).
pub fn read_glb_positions(bytes: &[u8]) -> Result<Vec<[f64; 3]>> {
    let bad = |m: &str| Error::Contract(format!("malformed GLB: {m}"));
    if bytes.len() < 20 || &bytes[0..4] != b"glTF" {
        return Err(bad("header"));
    }
    let u32_at = |o: usize| u32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]) as usize;
    let jlen = u32_at(12);
    let doc: Value = serde_json::from_slice(&bytes[20..20 + jlen])?;
    let bin_start = 20 + jlen + 8;
    let mut out = Vec::new();
    for p in doc["meshes"][0]["primitives"].as_array().ok_or_else(|| bad("primitives"))? {
        let acc = &doc["accessors"][p["attributes"]["POSITION"].as_u64().ok_or_else(|| bad("position"))? as usize];
        let view = &doc["bufferViews"][acc["bufferView"].as_u64().ok_or_else(|| bad("view"))? as usize];
        let off = bin_start + view["byteOffset"].as_u64().unwrap_or(0) as usize;
        for i in 0..acc["count"].as_u64().unwrap_or(0) as usize {
            let f = |k: usize| {
                let o = off + 12 * i + 4 * k;
                f32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]) as f64
            };
            out.push([f(0), f(1), f(2)]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::push_quad;

    fn quad() -> TexturedMesh {
        let mut m = TexturedMesh::default();
        push_quad(&mut m, [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]]);
        m
    }

    #[test]
    fn obj_of_a_quad() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("q.obj");
        write_obj(&quad(), &p).unwrap();
        let s = std::fs::read_to_string(&p).unwrap();
        assert_eq!(s.lines().filter(|l| l.starts_with("v ")).count(), 4);
        assert_eq!(s.lines().filter(|l| l.starts_with("f ")).count(), 2);
    }

    #[test]
    fn glb_positions_round_trip() {
        let m = quad();
        let b = glb_bytes(&m).unwrap();
        assert_eq!(b.len() % 4, 0);
        let pos = read_glb_positions(&b).unwrap();
        assert_eq!(pos.len(), 6);
        for (f, tri) in m.faces.iter().enumerate() {
            for k in 0..3 {
                let v = m.vertices[tri[k] as usize];
                for a in 0..3 {
                    assert!((pos[3 * f + k][a] - v[a]).abs() <= 1e-5);
                }
            }
        }
        assert!("ply".parse::<MeshFormat>().is_err());
    }
}
