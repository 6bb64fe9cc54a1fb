pub mod controller;
pub mod fit;
pub mod game;
pub mod output;
pub mod records;
pub mod service;
pub mod sim;
