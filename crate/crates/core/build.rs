// LAPACK comes from the system OpenBLAS.
fn main() {
    println!("cargo:rustc-link-lib=dylib=openblas");
}
