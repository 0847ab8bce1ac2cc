fn main() {
    std::process::exit(azimuthal_wigner::cli::run());
}
