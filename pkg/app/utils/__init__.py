"""
Paquete de utilidades

Este paquete contiene módulos de utilidad para la aplicación, como
configuración de logging, funciones auxiliares, etc.
""" 