pub mod conformal;
pub mod dense;
pub mod linprog;
pub mod neural;
pub mod pipeline;
pub mod reach;
pub mod sets;
pub mod systems;
