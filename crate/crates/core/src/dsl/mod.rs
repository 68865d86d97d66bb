//! Metric expression language and the built-in metric catalog.

pub mod catalog;
pub mod expr;
pub mod metric;
pub mod parser;

pub use catalog::{
    catalog, catalog_with, flat_pullback, CatalogArg, CatalogArgs, CatalogInfo, ENTRIES,
};
pub use expr::{BinOp, Expr, Func, JetContext};
pub use metric::{sym_index, MetricFile, MetricSpec, Validation};
pub use parser::parse;
