//! Write and read back a tensor container; show its header.

use vanhove_lab::io::{ArrayData, TensorContainer};

fn main() -> vanhove_lab::Result<()> {
    let mut c = TensorContainer::new("demo", "0000");
    c.set_attribute("note", "two small arrays");
    c.push_f64("ramp", &[2, 3], "m", vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0])?;
    c.push("counts", &[3], "1", ArrayData::I64(vec![7, 8, 9]))?;

    let dir = std::env::temp_dir().join("vanhove-demo");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("demo.vhl");
    vanhove_lab::commands::write_container(&path, &c)?;
    let back = TensorContainer::read(&path)?;
    assert_eq!(back.f64("ramp")?.1, c.f64("ramp")?.1);
    println!("{}", serde_json::to_string_pretty(&back.sidecar()).unwrap());
    println!("{} bytes, content hash {}", std::fs::metadata(&path)?.len(), back.content_hash());
    Ok(())
}
