fn main() {
    let crate_dir = std::env::var("CARGO_MANIFEST_DIR").unwrap();
    let output_file =
        std::path::PathBuf::from(&crate_dir).join("include").join("cbvar.h");
    std::fs::create_dir_all(output_file.parent().unwrap()).ok();

    let config = cbindgen::Config::from_file(
        std::path::Path::new(&crate_dir).join("cbindgen.toml"),
    )
    .unwrap_or_default();

    match cbindgen::Builder::new().with_crate(&crate_dir).with_config(config).generate() {
        Ok(bindings) => {
            let _ = bindings.write_to_file(&output_file);
        }
        Err(e) => {
            // keep the build alive; a stale header beats a broken build
            eprintln!("Warning: cbindgen failed: {e}");
        }
    }

    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
}
