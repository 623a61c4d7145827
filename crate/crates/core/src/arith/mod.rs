pub mod intmat;
pub mod modpoly;
pub mod multipoly;
pub mod primes;
