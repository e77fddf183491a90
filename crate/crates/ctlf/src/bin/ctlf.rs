fn main() {
    std::process::exit(ctlf::cli::run());
}
