//! Load a scenario with overrides and run it through the command driver.

use offgrid::config;

const SCENARIO: &str = r#"
id = "inline"
seed = 3
[dictionary]
preset = "dirichlet"
resolution = 31
[noise]
sigma_bar = 0.0
[signal]
beta = [1.0, -0.5]
theta = [0.2, 0.6]
"#;

fn main() -> offgrid::Result<()> {
    let cfg = config::parse(SCENARIO, &["test.kappa=1e-5".into()])?;
    println!("dictionary: {:?}", cfg.dictionary_spec()?);
    let dir = std::env::temp_dir().join("offgrid-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("scenario.toml");
    std::fs::write(&path, SCENARIO)?;
    let code = offgrid::cli::main_with_args([
        "offgrid",
        "estimate",
        path.to_str().unwrap(),
        "--out",
        dir.join("out").to_str().unwrap(),
        "--set",
        "test.kappa=1e-5",
    ]);
    println!("exit code {code}");
    print!("{}", std::fs::read_to_string(dir.join("out/estimate.csv"))?);
    Ok(())
}
