pub mod grad_cases;
pub mod tiny_model;
