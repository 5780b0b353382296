pub mod analyze;
pub mod modulus;
pub mod simulate;
pub mod tangent;
pub mod transform;

use triform::lie::LieTable;

use crate::error::CliError;
use crate::report::print_text;
use crate::Context;

pub fn validate(ctx: &Context) -> Result<(), CliError> {
    let s = &ctx.system;
    print_text(&format!(
        "system {}: n = {}, m = {}\nstates: {}\ninputs: {}\nsystem hash: {}\nconfig hash: {}\n",
        s.name,
        s.n(),
        s.m(),
        s.state_names.join(" "),
        s.input_names.join(" "),
        s.hash(),
        ctx.config.hash()
    ));
    Ok(())
}

pub fn dump_lie(ctx: &Context, order: usize) -> Result<(), CliError> {
    if order == 0 {
        return Err(CliError::Config("--order must be at least 1".into()));
    }
    print_text(&LieTable::new(ctx.system.clone()).dump(order));
    Ok(())
}
