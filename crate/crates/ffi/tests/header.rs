//! The generated header must compile as C and as C++.

use std::path::Path;
use std::process::Command;

fn compiles(compiler: &str, lang: &str) -> Option<bool> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join(if lang == "c" { "t.c" } else { "t.cpp" });
    std::fs::write(
        &src,
        "#include \"kinefp.h\"\nint main(void) { KfpConfig *c = 0; KfpStatus s = kfp_config_from_toml(\"\", &c);\n  return s == KFP_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    let out = Command::new(compiler)
        .arg("-fsyntax-only")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(dir.join("include"))
        .arg(&src)
        .output()
        .ok()?;
    if !out.status.success() {
        eprintln!("{}", String::from_utf8_lossy(&out.stderr));
    }
    Some(out.status.success())
}

#[test]
fn header_is_valid_c_and_cpp() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/kinefp.h");
    let text = std::fs::read_to_string(header).unwrap();
    for sym in [
        "kfp_run_copy_field",
        "kfp_last_error_message",
        "KFP_STATUS_BUFFER_TOO_SMALL",
        "typedef struct KfpRun KfpRun",
    ] {
        assert!(text.contains(sym), "missing {sym}");
    }
    for (cc, lang) in [("cc", "c"), ("c++", "cpp")] {
        match compiles(cc, lang) {
            Some(ok) => assert!(ok, "{cc} rejected the header"),
            None => eprintln!("{cc} not available, skipped"),
        }
    }
}
