//! Prints the built-in default configuration as TOML.

fn main() {
    let text = toml::to_string_pretty(&vsg_core::Config::default()).expect("serializable");
    print!("{text}");
}
