use std::path::Path;

use infocoupling::channel::{build_dtm, renyi_correlation, strong_dpi_coefficient, verify_top_singular};
use serde_json::json;

use crate::report::Report;
use crate::spec::load_spec;
use crate::CliError;

pub fn run(path: &Path) -> Result<Report, CliError> {
    let spec = load_spec(path)?;
    let (w, px) = spec.point_to_point()?;
    let dtm = build_dtm(&w, &px)?;
    let sp = &dtm.spectrum;
    let results = json!({
        "singular_values": sp.singular_values,
        "right_vectors": sp.right_vectors,
        "left_vectors": sp.left_vectors,
        "output_dist": dtm.output.probs(),
        "top_pair": verify_top_singular(&dtm),
        "spectrum_residuals": sp.residuals(&dtm.matrix),
        "contraction_coefficient": strong_dpi_coefficient(&dtm),
        "maximal_correlation": renyi_correlation(&dtm),
    });
    let inputs = json!({ "spec_path": path.display().to_string(), "spec": spec });
    Ok(Report::new("spectrum", inputs, results))
}
