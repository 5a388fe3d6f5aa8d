fn main() -> std::process::ExitCode {
    attack_synth::cli::main()
}
