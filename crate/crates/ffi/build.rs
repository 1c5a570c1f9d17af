use std::path::Path;

fn main() {
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");

    let crate_dir = std::env::var("CARGO_MANIFEST_DIR").unwrap();
    let header = Path::new(&crate_dir).join("include").join("fsplat.h");
    match cbindgen::generate(&crate_dir) {
        Ok(bindings) => {
            bindings.write_to_file(&header);
        }
        // A stale committed header is better than a broken build: report the
        // problem but keep compiling.
        Err(e) => println!("cargo:warning=skipped regenerating {}: {e}", header.display()),
    }
}
